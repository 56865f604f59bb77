use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `‖v‖₁`.
pub fn norm_1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn check_divisible(len: usize, block: usize) -> Result<()> {
    if block == 0 || !len.is_multiple_of(block) {
        return Err(Error::DimensionMismatch { expected: block, found: len });
    }
    Ok(())
}

/// Window norm on `R^{Tn}`: the largest `‖z_ℓ‖₁` over the `n`-subblocks.
pub fn norm_t(z: &[f64], n: usize) -> Result<f64> {
    check_divisible(z.len(), n)?;
    Ok(z.chunks(n).map(norm_1).fold(0.0, f64::max))
}

/// Combined norm on `R^{mTn}`: the largest window norm over the resource blocks.
/// Since each window norm is itself a max over `n`-subblocks, this equals the
/// largest `‖·‖₁` over all `n`-subblocks.
pub fn norm_combined(y: &[f64], n: usize, window: usize) -> Result<f64> {
    check_divisible(y.len(), n * window)?;
    y.chunks(n * window).map(|b| norm_t(b, n)).try_fold(0.0, |acc, b| Ok(f64::max(acc, b?)))
}

/// Projects onto the zero-sum subspace: subtracts the mean of every `n`-subblock.
pub fn project_w(z: &[f64], n: usize) -> Result<Vec<f64>> {
    check_divisible(z.len(), n)?;
    let mut out = Vec::with_capacity(z.len());
    for block in z.chunks(n) {
        let mean = block.iter().sum::<f64>() / n as f64;
        out.extend(block.iter().map(|v| v - mean));
    }
    Ok(out)
}

/// Which norm a property is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    Window { n: usize },
    Combined { n: usize, window: usize },
}

impl NormKind {
    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        match *self {
            NormKind::L1 => Ok(norm_1(v)),
            NormKind::Window { n } => norm_t(v, n),
            NormKind::Combined { n, window } => norm_combined(v, n, window),
        }
    }

    /// Subblock length used for zero-sum projection.
    pub fn block(&self, dim: usize) -> usize {
        match *self {
            NormKind::L1 => dim,
            NormKind::Window { n } | NormKind::Combined { n, .. } => n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn window_norm_examples() {
        assert_eq!(norm_t(&[1.0, -1.0, 0.5, -0.5], 2).unwrap(), 2.0);
        assert_eq!(norm_t(&[0.0; 6], 3).unwrap(), 0.0);
        let y = [1.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0];
        assert_eq!(norm_combined(&y, 2, 2).unwrap(), 3.0);
        assert!(norm_t(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(norm_combined(&[1.0; 6], 2, 2).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_w(&[1.0, 1.0], 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(project_w(&[1.0, -1.0], 2).unwrap(), vec![1.0, -1.0]);
        assert_eq!(project_w(&[2.0, 0.0], 2).unwrap(), vec![1.0, -1.0]);
        assert!(project_w(&[1.0; 5], 2).is_err());
    }

    fn vec6() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 12)
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_zero_sum(z in vec6()) {
            let p = project_w(&z, 3).unwrap();
            let pp = project_w(&p, 3).unwrap();
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            for block in p.chunks(3) {
                prop_assert!(block.iter().sum::<f64>().abs() < 1e-12);
            }
        }

        #[test]
        fn norm_axioms(a in vec6(), b in vec6(), s in -5.0f64..5.0) {
            for norm in [NormKind::Window { n: 3 }, NormKind::Combined { n: 2, window: 3 }] {
                let na = norm.eval(&a).unwrap();
                let nb = norm.eval(&b).unwrap();
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
                prop_assert!(norm.eval(&sum).unwrap() <= na + nb + 1e-12);
                prop_assert!((norm.eval(&scaled).unwrap() - s.abs() * na).abs() <= 1e-12 * (1.0 + na));
                prop_assert!(na >= 0.0);
            }
        }
    }
}
