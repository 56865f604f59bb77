use alloc::vec::Vec;

use super::{AimdMatrix, BackoffPattern, Matrix};
use crate::error::{Error, Result};

/// The `Tn × Tn` matrix that advances the vector of partial averages
/// `[x(k), (x(k)+x(k-1))/2, …, (x(k)+…+x(k-T+1))/T]` by one capacity event.
///
/// Row block `r` (1-based) holds `(1/r) A` in the first block column and
/// `((r-1)/r) I` in block column `r - 1`; for `r = 2` both land in the first
/// column, giving `(A + I)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix {
    n: usize,
    window: usize,
    full_backoff: bool,
    matrix: Matrix,
}

impl LiftedMatrix {
    /// Lifts an arbitrary square `n × n` block. `full_backoff` only tags the result.
    pub fn from_block(a: &Matrix, window: usize, full_backoff: bool) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
        }
        if window == 0 {
            return Err(Error::InvalidArgument("window must be ≥ 1".into()));
        }
        let n = a.rows();
        let eye = Matrix::identity(n);
        let mut matrix = Matrix::zeros(window * n, window * n);
        matrix.set_block(0, 0, a);
        for r in 2..=window {
            let rf = r as f64;
            let row = (r - 1) * n;
            matrix.add_block(row, 0, a, 1.0 / rf);
            matrix.add_block(row, (r - 2) * n, &eye, (rf - 1.0) / rf);
        }
        Ok(Self { n, window, full_backoff, matrix })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.n * self.window
    }

    /// True for `E` matrices, i.e. lifted from the all-agents-back-off matrix.
    pub fn is_full_backoff(&self) -> bool {
        self.full_backoff
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

/// `D` for an AIMD matrix.
pub fn build_d(a: &AimdMatrix, window: usize) -> Result<LiftedMatrix> {
    LiftedMatrix::from_block(a.matrix(), window, a.is_full_backoff())
}

/// `E`: the lifted full back-off matrix. Rejects any other pattern.
pub fn build_e(b: &AimdMatrix, window: usize) -> Result<LiftedMatrix> {
    if !b.is_full_backoff() {
        return Err(Error::InvalidArgument("E must be lifted from the full back-off matrix".into()));
    }
    build_d(b, window)
}

/// Applies the lifted matrix of `pattern` to one resource block in place, in
/// `O(Tn)` and without forming any matrix.
pub fn apply_lifted(pattern: &BackoffPattern, beta: f64, block: &mut [f64], n: usize) {
    debug_assert_eq!(block.len() % n, 0);
    let window = block.len() / n;
    let fresh = pattern.apply(beta, &block[..n]);
    for r in (2..=window).rev() {
        let rf = r as f64;
        let (head, tail) = block.split_at_mut((r - 1) * n);
        let prev = &head[(r - 2) * n..];
        for ((dst, &p), &a) in tail[..n].iter_mut().zip(prev).zip(&fresh) {
            *dst = a / rf + (rf - 1.0) / rf * p;
        }
    }
    block[..n].copy_from_slice(&fresh);
}

/// Product of lifted factors listed in the order they act: the result is
/// `F_L ⋯ F_2 F_1` for `factors = [F_1, F_2, …, F_L]`.
pub fn lifted_product(factors: &[LiftedMatrix]) -> Result<Matrix> {
    let first = factors.first().ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
    factors[1..].iter().try_fold(first.matrix.clone(), |acc, f| f.matrix.try_mul(&acc))
}

/// Block-diagonal operator on the stacked state `R^{mTn}`, stored as its `m`
/// diagonal `Tn × Tn` blocks. Single events (`U`) and their products (`H`,
/// and `Y` when every resource saw a full back-off) share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    n: usize,
    window: usize,
    blocks: Vec<Matrix>,
    full_backoff: Vec<bool>,
    events: Vec<usize>,
}

impl BlockMatrix {
    pub fn identity(n: usize, window: usize, m: usize) -> Self {
        Self {
            n,
            window,
            blocks: (0..m).map(|_| Matrix::identity(n * window)).collect(),
            full_backoff: alloc::vec![false; m],
            events: alloc::vec![0; m],
        }
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.blocks.len() * self.n * self.window
    }

    pub fn block(&self, j: usize) -> &Matrix {
        &self.blocks[j]
    }

    /// Number of capacity events of each resource folded into this operator.
    pub fn events(&self) -> &[usize] {
        &self.events
    }

    /// Whether every resource has at least one full back-off factor.
    pub fn is_full_backoff_product(&self) -> bool {
        self.full_backoff.iter().all(|&f| f)
    }

    pub fn full_backoff_resources(&self) -> &[bool] {
        &self.full_backoff
    }

    /// `next · self`: the operator that applies `self` first, then `next`.
    pub fn then(&self, next: &BlockMatrix) -> Result<BlockMatrix> {
        if (self.n, self.window, self.m()) != (next.n, next.window, next.m()) {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: next.dim() });
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&next.blocks)
            .zip(next.events.iter().zip(&self.events))
            .map(|((mine, theirs), (&e_next, &e_self))| match (e_self, e_next) {
                (_, 0) => Ok(mine.clone()),
                (0, _) => Ok(theirs.clone()),
                _ => theirs.try_mul(mine),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockMatrix {
            n: self.n,
            window: self.window,
            blocks,
            full_backoff: self.full_backoff.iter().zip(&next.full_backoff).map(|(a, b)| a | b).collect(),
            events: self.events.iter().zip(&next.events).map(|(a, b)| a + b).collect(),
        })
    }

    /// Product of single-event operators in the order they act.
    pub fn product(factors: &[BlockMatrix]) -> Result<BlockMatrix> {
        let first = factors.first().ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
        factors[1..].iter().try_fold(first.clone(), |acc, f| acc.then(f))
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        let size = self.n * self.window;
        let mut out = Vec::with_capacity(v.len());
        for (block, chunk) in self.blocks.iter().zip(v.chunks(size)) {
            out.extend(block.mul_vec(chunk));
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let size = self.n * self.window;
        let mut out = Matrix::zeros(self.dim(), self.dim());
        for (j, b) in self.blocks.iter().enumerate() {
            out.set_block(j * size, j * size, b);
        }
        out
    }
}

/// `U` for a capacity event of resource `j` (0-based) among `m` resources:
/// the lifted matrix on block `j`, identities elsewhere.
pub fn build_u(lifted: &LiftedMatrix, j: usize, m: usize) -> Result<BlockMatrix> {
    if j >= m {
        return Err(Error::InvalidArgument(alloc::format!("resource {j} out of range for m = {m}")));
    }
    let mut u = BlockMatrix::identity(lifted.n, lifted.window, m);
    u.blocks[j] = lifted.matrix.clone();
    u.full_backoff[j] = lifted.full_backoff;
    u.events[j] = 1;
    Ok(u)
}
