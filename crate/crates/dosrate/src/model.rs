//! Plant description and the modal coordinate machinery the coder runs in.
//!
//! A continuous-time LTI plant `x' = A x + B u` is brought to real Jordan form
//! `J = S A S^-1` by a user-supplied (or derived) similarity `S`. A further
//! time-varying orthogonal rotation frame `E(t)` strips the oscillatory part of
//! complex-conjugate eigenvalue pairs, leaving a time-invariant upper-bidiagonal
//! modal matrix. In these modal coordinates every block's flow has a cheap
//! closed form (scalar exponential times a polynomial Toeplitz factor), which
//! the quantization-range dynamics and all stability bookkeeping rely on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative Frobenius tolerance when checking that `S A S^-1` matches
/// the block structure's real Jordan matrix.
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Condition-number ceiling for the similarity `S`.
pub const MAX_CONDITION: f64 = 1e12;

/// Plant matrices plus the stabilizing state-feedback gain.
///
/// `u = K x` must place every eigenvalue of `A + B K` strictly in the open left
/// half plane; this is checked at construction.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl PlantSpec {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "state matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "input matrix has {} rows, expected {}",
                b.nrows(),
                n
            )));
        }
        if b.ncols() == 0 {
            return Err(Error::Dimension("input dimension must be positive".into()));
        }
        if k.nrows() != b.ncols() || k.ncols() != n {
            return Err(Error::Dimension(format!(
                "gain must be {}x{}, got {}x{}",
                b.ncols(),
                n,
                k.nrows(),
                k.ncols()
            )));
        }
        let closed_loop = &a + &b * &k;
        let max_re = max_real_eigenvalue(&closed_loop);
        if !(max_re < 0.0) {
            return Err(Error::NotStabilizing(max_re));
        }
        Ok(Self { a, b, k })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }
    /// State dimension.
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
}

/// Largest real part among the eigenvalues of a square real matrix.
pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One real Jordan block: eigenvalue real part `c`, imaginary part `d >= 0`
/// (`d == 0` for a real eigenvalue), and multiplicity parameter `n`.
///
/// A real block occupies `n` states, a complex-pair block `2 n` states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanBlock {
    pub c: f64,
    pub d: f64,
    pub n: usize,
}

impl JordanBlock {
    pub fn real(c: f64, n: usize) -> Result<Self> {
        Self::new(c, 0.0, n)
    }

    pub fn complex(c: f64, d: f64, n: usize) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::InvalidParam(format!(
                "complex block needs d > 0, got {d}"
            )));
        }
        Self::new(c, d, n)
    }

    pub fn new(c: f64, d: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam(
                "block multiplicity must be at least 1".into(),
            ));
        }
        if !c.is_finite() || !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidParam(format!(
                "block eigenvalue parts must be finite with d >= 0, got c={c}, d={d}"
            )));
        }
        Ok(Self { c, d, n })
    }

    /// Number of state components this block spans.
    pub fn dim(&self) -> usize {
        if self.is_complex() {
            2 * self.n
        } else {
            self.n
        }
    }

    pub fn is_complex(&self) -> bool {
        self.d > 0.0
    }
}

/// A real Jordan decomposition of the plant's state matrix: the ordered blocks
/// together with the similarity `S` (and its inverse) that realizes them.
#[derive(Debug, Clone)]
pub struct BlockStructure {
    blocks: Vec<JordanBlock>,
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
}

impl BlockStructure {
    /// Build from explicit blocks and similarity. Checks internal consistency
    /// (dimensions, conditioning of `S`); agreement with a concrete plant is
    /// checked separately by [`BlockStructure::validate_against`].
    pub fn new(blocks: Vec<JordanBlock>, s: DMatrix<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParam("at least one block required".into()));
        }
        let dim: usize = blocks.iter().map(JordanBlock::dim).sum();
        if !s.is_square() || s.nrows() != dim {
            return Err(Error::Dimension(format!(
                "similarity must be {}x{} to match the blocks, got {}x{}",
                dim,
                dim,
                s.nrows(),
                s.ncols()
            )));
        }
        let svals = s.clone().svd(false, false).singular_values;
        let smax = svals.max();
        let smin = svals.min();
        if !(smin > 0.0) || smax / smin > MAX_CONDITION {
            return Err(Error::IllConditioned(format!(
                "similarity condition number {:.3e} exceeds {:.1e}",
                if smin > 0.0 { smax / smin } else { f64::INFINITY },
                MAX_CONDITION
            )));
        }
        let s_inv = s.clone().try_inverse().ok_or_else(|| {
            Error::IllConditioned("similarity is numerically singular".into())
        })?;
        Ok(Self { blocks, s, s_inv })
    }

    /// Verify that `S A S^-1` reproduces this structure's real Jordan matrix to
    /// a relative Frobenius tolerance.
    pub fn validate_against(&self, a: &DMatrix<f64>, tol: f64) -> Result<()> {
        if a.nrows() != self.n_x() || a.ncols() != self.n_x() {
            return Err(Error::Dimension(format!(
                "plant is {}x{}, structure spans {} states",
                a.nrows(),
                a.ncols(),
                self.n_x()
            )));
        }
        let jordan = self.real_jordan();
        let reproduced = &self.s * a * &self.s_inv;
        let err = (&reproduced - &jordan).norm();
        let scale = jordan.norm().max(1.0);
        if err > tol * scale {
            return Err(Error::StructureMismatch(format!(
                "S A S^-1 differs from the block matrix by {:.3e} (allowed {:.3e})",
                err,
                tol * scale
            )));
        }
        Ok(())
    }

    /// Derive a structure from a plant matrix with distinct eigenvalues via
    /// eigendecomposition. Repeated or defective eigenvalues are rejected; such
    /// plants need an explicitly supplied structure.
    pub fn from_diagonalizable(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension("matrix must be square and nonempty".into()));
        }
        let n = a.nrows();
        let eigs = a.complex_eigenvalues();
        let scale = 1.0 + eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let sep_tol = 1e-8 * scale;
        for i in 0..n {
            for j in (i + 1)..n {
                if (eigs[i] - eigs[j]).norm() <= sep_tol {
                    return Err(Error::StructureMismatch(format!(
                        "eigenvalues {} and {} coincide to within {:.1e}; supply the \
                         block structure explicitly",
                        eigs[i], eigs[j], sep_tol
                    )));
                }
            }
        }

        let mut used = vec![false; n];
        let mut blocks = Vec::new();
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut col = 0usize;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let lam = eigs[i];
            if lam.im.abs() <= sep_tol {
                used[i] = true;
                let mut m = a.clone();
                for r in 0..n {
                    m[(r, r)] -= lam.re;
                }
                let v = real_null_vector(&m)?;
                p.set_column(col, &v);
                col += 1;
                blocks.push(JordanBlock::real(lam.re, 1)?);
            } else {
                // Pair with the conjugate; keep d > 0 as the representative.
                let conj = lam.conj();
                let partner = (0..n)
                    .find(|&j| !used[j] && j != i && (eigs[j] - conj).norm() <= sep_tol)
                    .ok_or_else(|| {
                        Error::StructureMismatch(format!(
                            "complex eigenvalue {lam} has no conjugate partner"
                        ))
                    })?;
                used[i] = true;
                used[partner] = true;
                let c = lam.re;
                let d = lam.im.abs();
                // Real 2n x 2n system for the eigenvector's real/imag parts:
                //   (A - cI) vr + d vi = 0,   -d vr + (A - cI) vi = 0.
                let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
                for r in 0..n {
                    for cix in 0..n {
                        let v = a[(r, cix)] - if r == cix { c } else { 0.0 };
                        m[(r, cix)] = v;
                        m[(n + r, n + cix)] = v;
                    }
                    m[(r, n + r)] = d;
                    m[(n + r, r)] = -d;
                }
                let w = real_null_vector(&m)?;
                let vr = w.rows(0, n).into_owned();
                let vi = w.rows(n, n).into_owned();
                // Column order [vi, vr] realizes the [[c, -d], [d, c]] block.
                p.set_column(col, &vi);
                p.set_column(col + 1, &vr);
                col += 2;
                blocks.push(JordanBlock::complex(c, d, 1)?);
            }
        }
        debug_assert_eq!(col, n);
        let s = p.try_inverse().ok_or_else(|| {
            Error::IllConditioned("eigenvector basis is numerically singular".into())
        })?;
        let structure = Self::new(blocks, s)?;
        structure.validate_against(a, 1e-7)?;
        Ok(structure)
    }

    pub fn blocks(&self) -> &[JordanBlock] {
        &self.blocks
    }
    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }
    pub fn s_inv(&self) -> &DMatrix<f64> {
        &self.s_inv
    }
    /// Total state dimension spanned by the blocks.
    pub fn n_x(&self) -> usize {
        self.s.nrows()
    }

    /// Starting state index of each block.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut off = 0;
        for b in &self.blocks {
            out.push(off);
            off += b.dim();
        }
        out
    }

    /// For each state component, the index of the block that owns it.
    pub fn element_block_map(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_x());
        for (r, b) in self.blocks.iter().enumerate() {
            out.extend(std::iter::repeat(r).take(b.dim()));
        }
        out
    }

    /// Expand one value per block into one value per state component.
    pub fn expand_per_block<T: Copy>(&self, per_block: &[T]) -> Result<Vec<T>> {
        if per_block.len() != self.blocks.len() {
            return Err(Error::Dimension(format!(
                "expected {} per-block values, got {}",
                self.blocks.len(),
                per_block.len()
            )));
        }
        let mut out = Vec::with_capacity(self.n_x());
        for (b, &v) in self.blocks.iter().zip(per_block) {
            out.extend(std::iter::repeat(v).take(b.dim()));
        }
        Ok(out)
    }

    /// The real Jordan matrix assembled from the blocks: rotation sub-blocks
    /// `[[c, -d], [d, c]]` on the diagonal with identity super-diagonal blocks.
    pub fn real_jordan(&self) -> DMatrix<f64> {
        let n = self.n_x();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            if b.is_complex() {
                for i in 0..b.n {
                    let o = off + 2 * i;
                    m[(o, o)] = b.c;
                    m[(o, o + 1)] = -b.d;
                    m[(o + 1, o)] = b.d;
                    m[(o + 1, o + 1)] = b.c;
                    if i + 1 < b.n {
                        m[(o, o + 2)] = 1.0;
                        m[(o + 1, o + 3)] = 1.0;
                    }
                }
            } else {
                for i in 0..b.n {
                    let o = off + i;
                    m[(o, o)] = b.c;
                    if i + 1 < b.n {
                        m[(o, o + 1)] = 1.0;
                    }
                }
            }
            off += b.dim();
        }
        m
    }

    /// The time-invariant modal matrix left after the rotation frame absorbs
    /// the oscillatory part: upper-bidiagonal with `c` on the diagonal (blocks
    /// of a complex pair carry the pattern on 2x2 identity sub-blocks).
    pub fn modal_matrix(&self) -> DMatrix<f64> {
        let n = self.n_x();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            if b.is_complex() {
                for i in 0..b.n {
                    let o = off + 2 * i;
                    m[(o, o)] = b.c;
                    m[(o + 1, o + 1)] = b.c;
                    if i + 1 < b.n {
                        m[(o, o + 2)] = 1.0;
                        m[(o + 1, o + 3)] = 1.0;
                    }
                }
            } else {
                for i in 0..b.n {
                    let o = off + i;
                    m[(o, o)] = b.c;
                    if i + 1 < b.n {
                        m[(o, o + 1)] = 1.0;
                    }
                }
            }
            off += b.dim();
        }
        m
    }

    /// Whether every block has a real eigenvalue (rotation frame identically I).
    pub fn all_real(&self) -> bool {
        self.blocks.iter().all(|b| !b.is_complex())
    }

    /// The orthogonal rotation frame at time `t`: identity on real blocks, and
    /// on complex blocks `n` diagonal copies of the planar rotation by `d t`
    /// (clockwise, so it unwinds the block's own rotation).
    pub fn rotation_at(&self, t: f64) -> DMatrix<f64> {
        let n = self.n_x();
        let mut m = DMatrix::identity(n, n);
        let mut off = 0;
        for b in &self.blocks {
            if b.is_complex() {
                let (s, c) = (b.d * t).sin_cos();
                for i in 0..b.n {
                    let o = off + 2 * i;
                    m[(o, o)] = c;
                    m[(o, o + 1)] = s;
                    m[(o + 1, o)] = -s;
                    m[(o + 1, o + 1)] = c;
                }
            }
            off += b.dim();
        }
        m
    }

    /// Map a plant-coordinate state into modal coordinates at time `t`.
    pub fn to_modal(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.rotation_at(t) * (&self.s * x)
    }

    /// Map a modal-coordinate state back to plant coordinates at time `t`.
    pub fn from_modal(&self, t: f64, xm: &DVector<f64>) -> DVector<f64> {
        &self.s_inv * (self.rotation_at(t).transpose() * xm)
    }

    /// Closed-form flow of the whole modal matrix over `dt` (block diagonal of
    /// [`block_flow`]).
    pub fn state_transition(&self, dt: f64) -> DMatrix<f64> {
        let n = self.n_x();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            let u = block_flow(b, dt);
            let d = b.dim();
            m.view_mut((off, off), (d, d)).copy_from(&u);
            off += d;
        }
        m
    }
}

/// Closed-form flow `exp(modal_block * t)` of a single block: the scalar
/// exponential `e^{c t}` times an upper-triangular Toeplitz matrix of
/// `t^k / k!` terms (expanded on 2x2 identity cells for complex pairs).
pub fn block_flow(block: &JordanBlock, t: f64) -> DMatrix<f64> {
    let n = block.n;
    let mut v = DMatrix::zeros(n, n);
    let mut term = 1.0; // t^k / k!
    for k in 0..n {
        if k > 0 {
            term *= t / k as f64;
        }
        for i in 0..(n - k) {
            v[(i, i + k)] = term;
        }
    }
    let v = v * block.c.mul_add(t, 0.0).exp();
    if block.is_complex() {
        v.kronecker(&DMatrix::identity(2, 2))
    } else {
        v
    }
}

/// A plant paired with a validated block structure, with the time-invariant
/// factors of the modal input and gain matrices precomputed.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    plant: PlantSpec,
    structure: BlockStructure,
    a_modal: DMatrix<f64>,
    sb: DMatrix<f64>,     // S B
    k_sinv: DMatrix<f64>, // K S^-1
    g: DMatrix<f64>,      // S B K S^-1
    predictor_const: Option<DMatrix<f64>>,
}

/// Pair a plant with a block structure, validating that the structure
/// reproduces the plant and that the assembled modal matrix satisfies the
/// defining identity of the rotation frame.
pub fn build_transformed_system(
    plant: PlantSpec,
    structure: BlockStructure,
) -> Result<TransformedSystem> {
    structure.validate_against(plant.a(), STRUCTURE_TOL)?;
    let a_modal = structure.modal_matrix();

    // The modal matrix must equal E(t) J E(t)^T + E'(t) E(t)^T at all times;
    // spot-check with a central-difference E' at a handful of instants. This
    // guards the assembly code against sign/layout mistakes.
    let jordan = structure.real_jordan();
    let h = 1e-6;
    for &t in &[0.3, 0.9, 1.7, 2.6, 4.1] {
        let e = structure.rotation_at(t);
        let e_dot = (structure.rotation_at(t + h) - structure.rotation_at(t - h)) / (2.0 * h);
        let reconstructed = &e * &jordan * e.transpose() + e_dot * e.transpose();
        let worst = (&reconstructed - &a_modal).abs().max();
        if worst > 1e-6 {
            return Err(Error::InvariantBreach(format!(
                "modal identity failed at t={t}: max entry error {worst:.3e}"
            )));
        }
    }

    let sb = structure.s() * plant.b();
    let k_sinv = plant.k() * structure.s_inv();
    let g = &sb * &k_sinv;
    let predictor_const = if structure.all_real() {
        Some(&a_modal + &g)
    } else {
        None
    };
    Ok(TransformedSystem {
        plant,
        structure,
        a_modal,
        sb,
        k_sinv,
        g,
        predictor_const,
    })
}

impl TransformedSystem {
    pub fn plant(&self) -> &PlantSpec {
        &self.plant
    }
    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }
    /// The time-invariant upper-bidiagonal modal matrix.
    pub fn a_modal(&self) -> &DMatrix<f64> {
        &self.a_modal
    }
    pub fn n_x(&self) -> usize {
        self.structure.n_x()
    }

    /// Modal input matrix at time `t`: `E(t) S B`.
    pub fn input_matrix_at(&self, t: f64) -> DMatrix<f64> {
        if self.structure.all_real() {
            self.sb.clone()
        } else {
            self.structure.rotation_at(t) * &self.sb
        }
    }

    /// Modal feedback gain at time `t`: `K S^-1 E(t)^T`.
    pub fn gain_at(&self, t: f64) -> DMatrix<f64> {
        if self.structure.all_real() {
            self.k_sinv.clone()
        } else {
            &self.k_sinv * self.structure.rotation_at(t).transpose()
        }
    }

    /// Control input for a modal state estimate: `u = gain_at(t) * xm`.
    pub fn control_from_modal(&self, t: f64, xm: &DVector<f64>) -> DVector<f64> {
        if self.structure.all_real() {
            &self.k_sinv * xm
        } else {
            &self.k_sinv * (self.structure.rotation_at(t).transpose() * xm)
        }
    }

    /// Closed-loop predictor matrix in modal coordinates at time `t`:
    /// `A_modal + E(t) (S B K S^-1) E(t)^T`. Constant when all blocks are real.
    pub fn predictor_matrix_at(&self, t: f64) -> DMatrix<f64> {
        match &self.predictor_const {
            Some(m) => m.clone(),
            None => {
                let e = self.structure.rotation_at(t);
                &self.a_modal + &e * &self.g * e.transpose()
            }
        }
    }

    /// Time derivative of the modal predictor state: avoids materializing the
    /// predictor matrix in the common all-real case.
    pub fn predictor_deriv(&self, t: f64, xm: &DVector<f64>) -> DVector<f64> {
        match &self.predictor_const {
            Some(m) => m * xm,
            None => {
                let e = self.structure.rotation_at(t);
                &self.a_modal * xm + &e * (&self.g * (e.transpose() * xm))
            }
        }
    }
}

/// Right singular vector for the smallest singular value, as a real column.
fn real_null_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::IllConditioned("SVD failed to produce V^T".into()))?;
    let vals = &svd.singular_values;
    let mut min_i = 0;
    for i in 1..vals.len() {
        if vals[i] < vals[min_i] {
            min_i = i;
        }
    }
    let row = v_t.row(min_i).transpose();
    let norm = row.norm();
    if !(norm > 0.0) {
        return Err(Error::IllConditioned("null vector has zero norm".into()));
    }
    Ok(row / norm)
}

/// Dense matrix exponential by scaling and squaring of the Taylor series.
///
/// Serves as a structure-agnostic alternative to the closed-form block flows:
/// tests compare the two, and callers without a Jordan decomposition at hand
/// can use it directly.
pub fn mat_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn double_integrator() -> (PlantSpec, BlockStructure) {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::identity(2, 2);
        let k = DMatrix::from_row_slice(2, 2, &[-2.1961, -0.7545, -0.7545, -2.7146]);
        let plant = PlantSpec::new(a, b, k).unwrap();
        let structure = BlockStructure::new(
            vec![JordanBlock::real(1.0, 2).unwrap()],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        (plant, structure)
    }

    fn random_structure(rng: &mut ChaCha8Rng, blocks: Vec<JordanBlock>) -> BlockStructure {
        let n: usize = blocks.iter().map(JordanBlock::dim).sum();
        // Random well-conditioned similarity: orthogonal factor times mild scaling.
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = raw.qr().q();
        let scale = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0)));
        BlockStructure::new(blocks, q * scale).unwrap()
    }

    #[test]
    fn jordan_form_already_in_modal_coordinates_passes_through() {
        let (plant, structure) = double_integrator();
        structure.validate_against(plant.a(), STRUCTURE_TOL).unwrap();
        assert_eq!(structure.modal_matrix(), *plant.a());
        assert_eq!(structure.real_jordan(), *plant.a());
    }

    #[test]
    fn distinct_real_eigenvalues_give_diagonal_modal_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let structure = BlockStructure::new(
            vec![
                JordanBlock::real(-1.0, 1).unwrap(),
                JordanBlock::real(-2.0, 1).unwrap(),
            ],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        structure.validate_against(&a, STRUCTURE_TOL).unwrap();
        assert_eq!(structure.modal_matrix(), a);
    }

    #[test]
    fn pure_rotation_has_zero_modal_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let structure = BlockStructure::new(
            vec![JordanBlock::complex(0.0, 1.0, 1).unwrap()],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        structure.validate_against(&a, STRUCTURE_TOL).unwrap();
        assert_eq!(structure.modal_matrix(), DMatrix::zeros(2, 2));
        assert_eq!(structure.real_jordan(), a);
    }

    #[test]
    fn rotation_frame_is_identity_for_real_blocks_and_at_time_zero() {
        let (_, structure) = double_integrator();
        assert_eq!(structure.rotation_at(3.7), DMatrix::identity(2, 2));

        let complex = BlockStructure::new(
            vec![JordanBlock::complex(0.2, 1.3, 2).unwrap()],
            DMatrix::identity(4, 4),
        )
        .unwrap();
        assert_relative_eq!(
            complex.rotation_at(0.0),
            DMatrix::identity(4, 4),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quarter_turn_rotation_matches_hand_value() {
        let structure = BlockStructure::new(
            vec![JordanBlock::complex(0.0, std::f64::consts::FRAC_PI_2, 1).unwrap()],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let e = structure.rotation_at(1.0);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(e, expected, epsilon = 1e-15);
    }

    #[test]
    fn rotation_frame_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let structure = BlockStructure::new(
            vec![
                JordanBlock::complex(0.4, 2.3, 2).unwrap(),
                JordanBlock::real(-0.5, 2).unwrap(),
                JordanBlock::complex(-1.0, 0.7, 1).unwrap(),
            ],
            DMatrix::identity(8, 8),
        )
        .unwrap();
        for _ in 0..50 {
            let t: f64 = rng.gen_range(-20.0..20.0);
            let e = structure.rotation_at(t);
            let gram = &e * e.transpose();
            let err = (&gram - DMatrix::identity(8, 8)).abs().max();
            assert!(err <= 1e-12, "orthogonality defect {err} at t={t}");
        }
    }

    #[test]
    fn block_flow_matches_hand_values() {
        let real = JordanBlock::real(1.0, 2).unwrap();
        let t = 0.7;
        let u = block_flow(&real, t);
        let e = t.exp();
        let expected = DMatrix::from_row_slice(2, 2, &[e, e * t, 0.0, e]);
        assert_relative_eq!(u, expected, epsilon = 1e-14);

        // Pure oscillator: modal matrix is zero, so the flow is the identity.
        let osc = JordanBlock::complex(0.0, 1.0, 1).unwrap();
        assert_relative_eq!(block_flow(&osc, 3.0), DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn block_flow_equals_matrix_exponential_of_modal_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c = rng.gen_range(-1.5..1.5);
            let block = if rng.gen_bool(0.5) {
                JordanBlock::real(c, rng.gen_range(1..4)).unwrap()
            } else {
                JordanBlock::complex(c, rng.gen_range(0.3..3.0), rng.gen_range(1..3)).unwrap()
            };
            let structure =
                BlockStructure::new(vec![block], DMatrix::identity(block.dim(), block.dim()))
                    .unwrap();
            let t = rng.gen_range(0.0..2.0);
            let expected = mat_exp(&(structure.modal_matrix() * t));
            assert_relative_eq!(block_flow(&block, t), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn block_flow_satisfies_the_semigroup_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let block = if rng.gen_bool(0.5) {
                JordanBlock::real(rng.gen_range(-1.0..1.0), rng.gen_range(1..4)).unwrap()
            } else {
                JordanBlock::complex(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.3..3.0),
                    rng.gen_range(1..3),
                )
                .unwrap()
            };
            let s = rng.gen_range(0.0..1.5);
            let t = rng.gen_range(0.0..1.5);
            let combined = block_flow(&block, s + t);
            let chained = block_flow(&block, s) * block_flow(&block, t);
            let scale = combined.norm().max(1.0);
            assert!(((&combined - &chained).norm() / scale) < 1e-12);
        }
    }

    #[test]
    fn modal_eigenvalues_are_the_block_real_parts() {
        let structure = BlockStructure::new(
            vec![
                JordanBlock::complex(0.4, 2.3, 2).unwrap(),
                JordanBlock::real(-0.5, 2).unwrap(),
            ],
            DMatrix::identity(6, 6),
        )
        .unwrap();
        let mut eigs: Vec<f64> = structure
            .modal_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|l| {
                assert!(l.im.abs() < 1e-12);
                l.re
            })
            .collect();
        eigs.sort_by(f64::total_cmp);
        assert_relative_eq!(
            DVector::from_vec(eigs),
            DVector::from_vec(vec![-0.5, -0.5, 0.4, 0.4, 0.4, 0.4]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn modal_coordinates_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let blocks = vec![
                JordanBlock::complex(rng.gen_range(-1.0..1.0), rng.gen_range(0.3..2.0), 1)
                    .unwrap(),
                JordanBlock::real(rng.gen_range(-1.0..1.0), rng.gen_range(1..3)).unwrap(),
            ];
            let structure = random_structure(&mut rng, blocks);
            let n = structure.n_x();
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let t = rng.gen_range(-3.0..3.0);
            let back = structure.from_modal(t, &structure.to_modal(t, &x));
            let err = (&back - &x).norm();
            assert!(err <= 1e-10 * x.norm().max(1.0), "roundtrip error {err}");
        }
    }

    #[test]
    fn transformed_system_validates_the_modal_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let blocks = vec![
            JordanBlock::complex(0.3, 1.7, 1).unwrap(),
            JordanBlock::real(-0.8, 1).unwrap(),
        ];
        let structure = random_structure(&mut rng, blocks);
        let a = structure.s_inv() * structure.real_jordan() * structure.s();
        let b = DMatrix::identity(3, 3);
        // A + B K = -I is trivially Hurwitz.
        let k = -&a - DMatrix::identity(3, 3);
        let plant = PlantSpec::new(a, b, k).unwrap();
        let ts = build_transformed_system(plant, structure).unwrap();
        assert_eq!(ts.n_x(), 3);
    }

    #[test]
    fn gain_and_input_matrices_reduce_to_plain_factors_for_real_blocks() {
        let (plant, structure) = double_integrator();
        let k = plant.k().clone();
        let b = plant.b().clone();
        let ts = build_transformed_system(plant, structure).unwrap();
        assert_eq!(ts.gain_at(2.0), k);
        assert_eq!(ts.input_matrix_at(2.0), b);
        // S = I, so the predictor matrix is A + B K.
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[1.0 - 2.1961, 1.0 - 0.7545, -0.7545, 1.0 - 2.7146],
        );
        assert_relative_eq!(ts.predictor_matrix_at(0.0), expected, epsilon = 1e-12);
    }

    #[test]
    fn eigendecomposition_recovers_real_and_complex_blocks() {
        // Real distinct: companion matrix with eigenvalues -1, -2.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let st = BlockStructure::from_diagonalizable(&a).unwrap();
        st.validate_against(&a, 1e-7).unwrap();
        let mut cs: Vec<f64> = st.blocks().iter().map(|b| b.c).collect();
        cs.sort_by(f64::total_cmp);
        assert_relative_eq!(cs[0], -2.0, epsilon = 1e-9);
        assert_relative_eq!(cs[1], -1.0, epsilon = 1e-9);

        // Complex pair: eigenvalues 0.1 +/- 2i.
        let a = DMatrix::from_row_slice(2, 2, &[0.1, -2.0, 2.0, 0.1]);
        let st = BlockStructure::from_diagonalizable(&a).unwrap();
        st.validate_against(&a, 1e-7).unwrap();
        assert_eq!(st.blocks().len(), 1);
        assert!(st.blocks()[0].is_complex());
        assert_relative_eq!(st.blocks()[0].c, 0.1, epsilon = 1e-9);
        assert_relative_eq!(st.blocks()[0].d, 2.0, epsilon = 1e-9);

        // Mixed 3x3.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let blocks = vec![
            JordanBlock::complex(-0.2, 1.1, 1).unwrap(),
            JordanBlock::real(0.5, 1).unwrap(),
        ];
        let target = random_structure(&mut rng, blocks);
        let a = target.s_inv() * target.real_jordan() * target.s();
        let st = BlockStructure::from_diagonalizable(&a).unwrap();
        st.validate_against(&a, 1e-7).unwrap();
    }

    #[test]
    fn defective_matrices_are_rejected_by_the_eigen_constructor() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            BlockStructure::from_diagonalizable(&a),
            Err(Error::StructureMismatch(_))
        ));
    }

    #[test]
    fn plant_validation_rejects_bad_shapes_and_unstable_gains() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::identity(2, 2);
        assert!(matches!(
            PlantSpec::new(a.clone(), DMatrix::identity(3, 3), DMatrix::zeros(3, 2)),
            Err(Error::Dimension(_))
        ));
        match PlantSpec::new(a.clone(), b, DMatrix::zeros(2, 2)) {
            Err(Error::NotStabilizing(re)) => assert_relative_eq!(re, 1.0, epsilon = 1e-9),
            other => panic!("expected NotStabilizing, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_structure_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let wrong = BlockStructure::new(
            vec![JordanBlock::real(2.0, 2).unwrap()],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(matches!(
            wrong.validate_against(&a, STRUCTURE_TOL),
            Err(Error::StructureMismatch(_))
        ));
    }

    #[test]
    fn ill_conditioned_similarity_is_rejected() {
        let mut s = DMatrix::identity(2, 2);
        s[(1, 1)] = 1e-14;
        assert!(matches!(
            BlockStructure::new(vec![JordanBlock::real(1.0, 2).unwrap()], s),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn state_transition_is_block_diagonal_of_flows() {
        let structure = BlockStructure::new(
            vec![
                JordanBlock::real(0.5, 2).unwrap(),
                JordanBlock::complex(-0.3, 2.0, 1).unwrap(),
            ],
            DMatrix::identity(4, 4),
        )
        .unwrap();
        let dt = 0.37;
        let full = structure.state_transition(dt);
        let top = block_flow(&structure.blocks()[0], dt);
        let bottom = block_flow(&structure.blocks()[1], dt);
        assert_eq!(full.view((0, 0), (2, 2)).clone_owned(), top);
        assert_eq!(full.view((2, 2), (2, 2)).clone_owned(), bottom);
        assert_eq!(full.view((0, 2), (2, 2)).clone_owned(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn per_block_expansion_tracks_block_dimensions() {
        let structure = BlockStructure::new(
            vec![
                JordanBlock::complex(0.0, 1.0, 2).unwrap(),
                JordanBlock::real(1.0, 1).unwrap(),
            ],
            DMatrix::identity(5, 5),
        )
        .unwrap();
        assert_eq!(structure.block_offsets(), vec![0, 4]);
        assert_eq!(structure.element_block_map(), vec![0, 0, 0, 0, 1]);
        assert_eq!(
            structure.expand_per_block(&[7u32, 9u32]).unwrap(),
            vec![7, 7, 7, 7, 9]
        );
        assert!(structure.expand_per_block(&[1u32]).is_err());
    }
}
