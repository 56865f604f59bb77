//! Randomized checks of the stochasticity, non-expansivity and contraction
//! properties of AIMD matrices and their lifts.
//!
//! Every check samples random matrices from the sets the properties quantify
//! over and random test vectors, and reports the worst ratio `‖Mz‖ / ‖z‖`
//! together with the vector that produced it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{build_u, norm_1, project_w, AimdMatrix, BackoffPattern, BlockMatrix, LiftedMatrix, Matrix, NormKind};
use crate::error::{Error, Result};

/// Slack allowed above 1 for non-expansive checks.
pub const NONEXPANSIVE_TOL: f64 = 1e-12;
/// Required gap below 1 for strict contraction checks.
pub const STRICT_MARGIN: f64 = 1e-10;
/// Tolerance on column sums and the zero-sum subspace.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Domain the test vectors are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Full,
    /// Every `n`-subblock sums to zero.
    ZeroSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub max_ratio: f64,
    /// Unit-norm input attaining `max_ratio` (empty when vacuous).
    pub witness: Vec<f64>,
    pub trials: usize,
    pub strict: bool,
    pub passed: bool,
    /// The sampled space is `{0}` (e.g. zero-sum vectors with `n = 1`).
    pub vacuous: bool,
}

impl NormReport {
    fn new(strict: bool) -> Self {
        Self { max_ratio: 0.0, witness: Vec::new(), trials: 0, strict, passed: true, vacuous: false }
    }

    fn record(&mut self, ratio: f64, z: &[f64]) {
        self.trials += 1;
        if ratio > self.max_ratio || self.witness.is_empty() {
            self.max_ratio = ratio;
            self.witness = z.to_vec();
        }
    }

    fn merge(&mut self, other: NormReport) {
        self.trials += other.trials;
        if other.trials > 0 && (other.max_ratio > self.max_ratio || self.witness.is_empty()) {
            self.max_ratio = other.max_ratio;
            self.witness = other.witness;
        }
        self.vacuous = self.vacuous && other.vacuous;
    }

    fn finish(mut self) -> Self {
        if self.trials == 0 {
            self.vacuous = true;
        }
        self.passed = self.vacuous || ratio_ok(self.max_ratio, self.strict);
        self
    }
}

fn ratio_ok(ratio: f64, strict: bool) -> bool {
    if strict {
        ratio <= 1.0 - STRICT_MARGIN
    } else {
        ratio <= 1.0 + NONEXPANSIVE_TOL
    }
}

/// Draws a random vector of unit `norm` in `space`, or `None` if the space is trivial.
pub fn random_unit_vector<R: RngCore + ?Sized>(
    dim: usize,
    norm: NormKind,
    space: Space,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    let block = norm.block(dim);
    for _ in 0..8 {
        let mut z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Concentrating mass on one subblock reaches the extreme directions of
        // max-type norms far more often than isotropic sampling.
        if dim > block && rng.random_bool(0.25) {
            let keep = rng.random_range(0..dim / block);
            for (b, chunk) in z.chunks_mut(block).enumerate() {
                if b != keep {
                    chunk.iter_mut().for_each(|v| *v *= 1e-3);
                }
            }
        }
        if space == Space::ZeroSum {
            z = project_w(&z, block)?;
        }
        let size = norm.eval(&z)?;
        if size > 1e-9 {
            z.iter_mut().for_each(|v| *v /= size);
            return Ok(Some(z));
        }
        if space == Space::ZeroSum && block == 1 {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Samples `trials` unit vectors and reports the worst `‖Mz‖ / ‖z‖`.
/// `strict` selects the pass criterion: `≤ 1 - 1e-10` instead of `≤ 1 + 1e-12`.
pub fn verify_norm_property<R: RngCore + ?Sized>(
    m: &Matrix,
    norm: NormKind,
    space: Space,
    strict: bool,
    trials: usize,
    rng: &mut R,
) -> Result<NormReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be ≥ 1".into()));
    }
    let mut report = NormReport::new(strict);
    for _ in 0..trials {
        let Some(z) = random_unit_vector(m.cols(), norm, space, rng)? else {
            break;
        };
        let ratio = norm.eval(&m.try_mul_vec(&z)?)?;
        report.record(ratio, &z);
    }
    Ok(report.finish())
}

/// Source of AIMD matrices for the property suite. Swapping the builder lets a
/// caller confirm that the suite detects a broken construction.
pub trait MatrixBuilder {
    fn build(&self, pattern: &BackoffPattern, beta: f64) -> Result<Matrix>;
}

/// Builds matrices exactly as [`AimdMatrix::new`] does.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardBuilder;

impl MatrixBuilder for StandardBuilder {
    fn build(&self, pattern: &BackoffPattern, beta: f64) -> Result<Matrix> {
        Ok(AimdMatrix::new(pattern.clone(), beta)?.matrix().clone())
    }
}

/// Fault injection: returns the identity for the full back-off pattern, which
/// keeps every matrix stochastic but destroys the strict contraction.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityForFullBackoff;

impl MatrixBuilder for IdentityForFullBackoff {
    fn build(&self, pattern: &BackoffPattern, beta: f64) -> Result<Matrix> {
        if pattern.is_full() {
            Ok(Matrix::identity(pattern.len()))
        } else {
            StandardBuilder.build(pattern, beta)
        }
    }
}

/// Outcome of one property of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub trials: usize,
    /// Worst observed value of the checked quantity (ratio, deviation or entry).
    pub worst: f64,
    /// Threshold the worst value was held against.
    pub bound: f64,
    pub witness: Option<Vec<f64>>,
    pub vacuous: bool,
    pub detail: String,
}

impl PropertyOutcome {
    fn from_report(name: &'static str, description: &'static str, r: NormReport) -> Self {
        let bound = if r.strict { 1.0 - STRICT_MARGIN } else { 1.0 + NONEXPANSIVE_TOL };
        Self {
            name,
            description,
            passed: r.passed,
            trials: r.trials,
            worst: r.max_ratio,
            bound,
            witness: if r.witness.is_empty() { None } else { Some(r.witness) },
            vacuous: r.vacuous,
            detail: String::new(),
        }
    }
}

/// Parameters of the randomized property suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySuite {
    pub n: usize,
    pub window: usize,
    /// Multiplicative factor of every resource; `m = betas.len()`.
    pub betas: Vec<f64>,
    pub trials: usize,
    /// Longest product sampled in the product checks.
    pub max_product: usize,
}

impl PropertySuite {
    pub fn new(n: usize, window: usize, betas: Vec<f64>, trials: usize) -> Self {
        Self { n, window, betas, trials, max_product: 6 }
    }

    fn m(&self) -> usize {
        self.betas.len()
    }

    fn random_pattern<R: RngCore + ?Sized>(&self, rng: &mut R) -> BackoffPattern {
        BackoffPattern::new((0..self.n).map(|_| rng.random_bool(0.5)).collect())
    }

    /// Random patterns for a product of `len` factors; when `with_full`, one
    /// randomly placed factor is the full back-off pattern.
    fn random_patterns<R: RngCore + ?Sized>(&self, len: usize, with_full: bool, rng: &mut R) -> Vec<BackoffPattern> {
        let mut patterns: Vec<_> = (0..len).map(|_| self.random_pattern(rng)).collect();
        if with_full {
            let at = rng.random_range(0..len);
            patterns[at] = BackoffPattern::full(self.n);
        }
        patterns
    }

    fn plain_product(&self, builder: &dyn MatrixBuilder, patterns: &[BackoffPattern], beta: f64) -> Result<Matrix> {
        let mut acc = Matrix::identity(self.n);
        for p in patterns {
            acc = builder.build(p, beta)?.try_mul(&acc)?;
        }
        Ok(acc)
    }

    fn lifted(&self, builder: &dyn MatrixBuilder, pattern: &BackoffPattern, beta: f64) -> Result<LiftedMatrix> {
        LiftedMatrix::from_block(&builder.build(pattern, beta)?, self.window, pattern.is_full())
    }

    fn lifted_product(&self, builder: &dyn MatrixBuilder, patterns: &[BackoffPattern], beta: f64) -> Result<Matrix> {
        let mut acc = Matrix::identity(self.n * self.window);
        for p in patterns {
            acc = self.lifted(builder, p, beta)?.matrix().try_mul(&acc)?;
        }
        Ok(acc)
    }

    /// Random product of single-event block operators. With `full_each`, each
    /// resource receives at least one full back-off event.
    fn block_product<R: RngCore + ?Sized>(
        &self,
        builder: &dyn MatrixBuilder,
        full_each: bool,
        rng: &mut R,
    ) -> Result<BlockMatrix> {
        let m = self.m();
        let len = rng.random_range(1..=self.max_product).max(if full_each { m } else { 1 });
        let mut resources: Vec<usize> = (0..len).map(|_| rng.random_range(0..m)).collect();
        let mut full = vec![false; len];
        if full_each {
            // Reserve distinct slots for one full back-off of every resource.
            let mut slots: Vec<usize> = (0..len).collect();
            for j in 0..m {
                let pick = rng.random_range(0..slots.len());
                let slot = slots.swap_remove(pick);
                resources[slot] = j;
                full[slot] = true;
            }
        }
        let mut acc = BlockMatrix::identity(self.n, self.window, m);
        for (&j, &f) in resources.iter().zip(&full) {
            let pattern = if f { BackoffPattern::full(self.n) } else { self.random_pattern(rng) };
            let u = build_u(&self.lifted(builder, &pattern, self.betas[j])?, j, m)?;
            acc = acc.then(&u)?;
        }
        Ok(acc)
    }

    fn beta<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.betas[rng.random_range(0..self.m())]
    }

    fn worst_vector<R: RngCore + ?Sized>(
        &self,
        m: &Matrix,
        norm: NormKind,
        space: Space,
        strict: bool,
        rng: &mut R,
    ) -> Result<NormReport> {
        verify_norm_property(m, norm, space, strict, 1, rng)
    }

    /// Runs every property with the given builder.
    pub fn run<R: RngCore + ?Sized>(&self, builder: &dyn MatrixBuilder, rng: &mut R) -> Result<Vec<PropertyOutcome>> {
        if self.n == 0 || self.window == 0 || self.betas.is_empty() || self.trials == 0 {
            return Err(Error::InvalidArgument("suite needs n, T, m and trials ≥ 1".into()));
        }
        let n = self.n;
        let window = self.window;
        let m = self.m();
        let trials = self.trials;
        let l1 = NormKind::L1;
        let wnorm = NormKind::Window { n };
        let cnorm = NormKind::Combined { n, window };
        let mut out = Vec::new();

        // Column stochasticity of single matrices and of products.
        let mut worst_dev = 0.0f64;
        let mut witness = None;
        let mut worst_product_dev = 0.0f64;
        let mut product_witness = None;
        for _ in 0..trials {
            let beta = self.beta(rng);
            let p = self.random_pattern(rng);
            let a = builder.build(&p, beta)?;
            let dev = stochastic_deviation(&a);
            if dev > worst_dev {
                worst_dev = dev;
                witness = Some(p.factors(beta));
            }
            let len = rng.random_range(1..=self.max_product);
            let patterns = self.random_patterns(len, false, rng);
            let prod = self.plain_product(builder, &patterns, beta)?;
            let dev = stochastic_deviation(&prod);
            if dev > worst_product_dev {
                worst_product_dev = dev;
                product_witness = Some(patterns.iter().flat_map(|p| p.factors(beta)).collect());
            }
        }
        out.push(PropertyOutcome {
            name: "aimd_column_stochastic",
            description: "every AIMD matrix is non-negative with unit column sums",
            passed: worst_dev <= STOCHASTIC_TOL,
            trials,
            worst: worst_dev,
            bound: STOCHASTIC_TOL,
            witness,
            vacuous: false,
            detail: String::new(),
        });
        out.push(PropertyOutcome {
            name: "product_column_stochastic",
            description: "finite products of AIMD matrices stay column-stochastic",
            passed: worst_product_dev <= STOCHASTIC_TOL,
            trials,
            worst: worst_product_dev,
            bound: STOCHASTIC_TOL,
            witness: product_witness,
            vacuous: false,
            detail: String::new(),
        });

        // Products containing a full back-off are entrywise positive.
        let mut min_entry = f64::INFINITY;
        let mut witness = None;
        for _ in 0..trials {
            let beta = self.beta(rng);
            let len = rng.random_range(1..=self.max_product);
            let patterns = self.random_patterns(len, true, rng);
            let prod = self.plain_product(builder, &patterns, beta)?;
            let e = prod.min_entry();
            if e < min_entry {
                min_entry = e;
                witness = Some(patterns.iter().flat_map(|p| p.factors(beta)).collect());
            }
        }
        out.push(PropertyOutcome {
            name: "full_backoff_product_positive",
            description: "products containing the full back-off matrix have positive entries",
            passed: min_entry > 0.0,
            trials,
            worst: min_entry,
            bound: 0.0,
            witness,
            vacuous: false,
            detail: String::new(),
        });

        // Powers are non-expansive in the 1-norm.
        let mut report = NormReport::new(false);
        for _ in 0..trials {
            let beta = self.beta(rng);
            let p = self.random_pattern(rng);
            let power = rng.random_range(1..=8);
            let patterns = vec![p; power];
            let prod = self.plain_product(builder, &patterns, beta)?;
            report.merge(self.worst_vector(&prod, l1, Space::Full, false, rng)?);
        }
        out.push(PropertyOutcome::from_report("power_nonexpansive_l1", "‖A^ℓ z‖₁ ≤ ‖z‖₁", report.finish()));

        // Products with a full back-off contract zero-sum vectors in the 1-norm.
        let mut report = NormReport::new(true);
        for _ in 0..trials {
            let beta = self.beta(rng);
            let len = rng.random_range(1..=self.max_product);
            let patterns = self.random_patterns(len, true, rng);
            let prod = self.plain_product(builder, &patterns, beta)?;
            report.merge(self.worst_vector(&prod, l1, Space::ZeroSum, true, rng)?);
        }
        out.push(PropertyOutcome::from_report(
            "backoff_product_contracts_l1",
            "‖X_ℓ⋯X_1 z‖₁ < ‖z‖₁ for zero-sum z when some X is the full back-off matrix",
            report.finish(),
        ));

        // Zero-sum subspace is invariant under lifted and block matrices.
        let mut worst_leak = 0.0f64;
        let mut witness = None;
        for _ in 0..trials {
            let h = self.block_product(builder, false, rng)?;
            let Some(z) = random_unit_vector(h.dim(), cnorm, Space::ZeroSum, rng)? else {
                break;
            };
            let image = h.apply(&z)?;
            let leak = image.chunks(n).map(|b| b.iter().sum::<f64>().abs()).fold(0.0, f64::max);
            if leak > worst_leak {
                worst_leak = leak;
                witness = Some(z);
            }
        }
        out.push(PropertyOutcome {
            name: "zero_sum_invariance",
            description: "zero-sum subblocks stay zero-sum under every U and product H",
            passed: worst_leak <= STOCHASTIC_TOL,
            trials,
            worst: worst_leak,
            bound: STOCHASTIC_TOL,
            witness,
            vacuous: n == 1,
            detail: String::new(),
        });

        // Lifted matrices are non-expansive on all of R^{Tn}.
        let mut report = NormReport::new(false);
        for _ in 0..trials {
            let beta = self.beta(rng);
            let d = self.lifted(builder, &self.random_pattern(rng), beta)?;
            report.merge(self.worst_vector(d.matrix(), wnorm, Space::Full, false, rng)?);
        }
        out.push(PropertyOutcome::from_report("lifted_nonexpansive", "‖D z‖_T ≤ ‖z‖_T", report.finish()));

        // The lifted full back-off strictly contracts zero-sum vectors.
        let mut report = NormReport::new(true);
        for _ in 0..trials {
            let beta = self.beta(rng);
            let e = self.lifted(builder, &BackoffPattern::full(n), beta)?;
            report.merge(self.worst_vector(e.matrix(), wnorm, Space::ZeroSum, true, rng)?);
        }
        out.push(PropertyOutcome::from_report(
            "lifted_full_backoff_contracts",
            "‖E z‖_T < ‖z‖_T for non-zero zero-sum z",
            report.finish(),
        ));

        // Single-event block operators are non-expansive on W.
        let mut report = NormReport::new(false);
        for _ in 0..trials {
            let j = rng.random_range(0..m);
            let d = self.lifted(builder, &self.random_pattern(rng), self.betas[j])?;
            let u = build_u(&d, j, m)?.to_dense();
            report.merge(self.worst_vector(&u, cnorm, Space::ZeroSum, false, rng)?);
        }
        out.push(PropertyOutcome::from_report("block_nonexpansive", "‖U z‖ ≤ ‖z‖ for zero-sum z", report.finish()));

        // Products of lifted matrices.
        let mut report = NormReport::new(false);
        for _ in 0..trials {
            let beta = self.beta(rng);
            let len = rng.random_range(1..=self.max_product);
            let patterns = self.random_patterns(len, false, rng);
            let prod = self.lifted_product(builder, &patterns, beta)?;
            report.merge(self.worst_vector(&prod, wnorm, Space::ZeroSum, false, rng)?);
        }
        out.push(PropertyOutcome::from_report(
            "lifted_product_nonexpansive",
            "‖D_ℓ⋯D_1 z‖_T ≤ ‖z‖_T for zero-sum z",
            report.finish(),
        ));
        let mut report = NormReport::new(true);
        for _ in 0..trials {
            let beta = self.beta(rng);
            let len = rng.random_range(1..=self.max_product);
            let patterns = self.random_patterns(len, true, rng);
            let prod = self.lifted_product(builder, &patterns, beta)?;
            report.merge(self.worst_vector(&prod, wnorm, Space::ZeroSum, true, rng)?);
        }
        out.push(PropertyOutcome::from_report(
            "lifted_product_contracts",
            "‖M_ℓ⋯M_1 z‖_T < ‖z‖_T for zero-sum z when some factor is E",
            report.finish(),
        ));

        // Products of block operators.
        let mut report = NormReport::new(false);
        for _ in 0..trials {
            let h = self.block_product(builder, false, rng)?.to_dense();
            report.merge(self.worst_vector(&h, cnorm, Space::ZeroSum, false, rng)?);
        }
        out.push(PropertyOutcome::from_report(
            "block_product_nonexpansive",
            "‖H z‖ ≤ ‖z‖ for zero-sum z",
            report.finish(),
        ));
        let mut report = NormReport::new(true);
        for _ in 0..trials {
            let y = self.block_product(builder, true, rng)?.to_dense();
            report.merge(self.worst_vector(&y, cnorm, Space::ZeroSum, true, rng)?);
        }
        out.push(PropertyOutcome::from_report(
            "full_backoff_block_product_contracts",
            "‖Y z‖ < ‖z‖ for non-zero zero-sum z when every resource fully backs off",
            report.finish(),
        ));

        // Norm axioms.
        let mut worst_axiom = 0.0f64;
        let mut witness = None;
        let dim = m * n * window;
        for _ in 0..trials {
            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s: f64 = rng.random_range(-3.0..3.0);
            for (norm, len) in [(wnorm, n * window), (cnorm, dim)] {
                let (a, b) = (&a[..len], &b[..len]);
                let na = norm.eval(a)?;
                let nb = norm.eval(b)?;
                let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
                let triangle = (norm.eval(&sum)? - na - nb).max(0.0);
                let homogeneity = (norm.eval(&scaled)? - s.abs() * na).abs();
                let violation = triangle.max(homogeneity);
                if violation > worst_axiom {
                    worst_axiom = violation;
                    witness = Some(a.to_vec());
                }
            }
        }
        out.push(PropertyOutcome {
            name: "norm_axioms",
            description: "window and combined norms are homogeneous and subadditive",
            passed: worst_axiom <= STOCHASTIC_TOL,
            trials,
            worst: worst_axiom,
            bound: STOCHASTIC_TOL,
            witness,
            vacuous: false,
            detail: String::new(),
        });

        Ok(out)
    }
}

/// Largest violation of column stochasticity: max of negative mass and `|colsum - 1|`.
pub fn stochastic_deviation(m: &Matrix) -> f64 {
    let neg = (-m.min_entry()).max(0.0);
    m.column_sums().iter().map(|s| (s - 1.0).abs()).fold(neg, f64::max)
}

/// Zero-sum check used by callers holding plain vectors.
pub fn subblock_sums_vanish(z: &[f64], n: usize, tol: f64) -> bool {
    z.chunks(n).all(|b| b.iter().sum::<f64>().abs() <= tol * norm_1(b).max(1.0))
}
