//! Weight algebras for lattice computations.
//!
//! All weights are stored as negative log probabilities. Three semirings are
//! provided:
//!
//! * [`TropicalWeight`]: `(min, +)`, used for Viterbi decoding.
//! * [`LogWeight`]: `(log-sum-exp, +)`, used for marginal likelihoods.
//! * [`ExpectationWeight`]: a path mass paired with a sparse vector of expected
//!   edit-operation counts, so that a single shortest-distance pass yields both
//!   the marginal likelihood and the sufficient statistics for EM.

use std::fmt;

/// A commutative semiring over negative-log-encoded weights.
pub trait Semiring: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn plus(&self, rhs: &Self) -> Self;
    fn times(&self, rhs: &Self) -> Self;

    /// Lifts a plain negative log probability into the semiring.
    fn from_neg_log(value: f64) -> Self;

    /// The negative log mass carried by this weight.
    fn neg_log(&self) -> f64;

    fn is_zero(&self) -> bool {
        self.neg_log() == f64::INFINITY
    }

    /// Approximate equality used by tests and convergence checks.
    fn approx_eq(&self, other: &Self, tol: f64) -> bool;
}

/// Numerically stable `-ln(e^-a + e^-b)`.
pub fn neg_log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY {
        return b;
    }
    if b == f64::INFINITY {
        return a;
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    lo - (lo - hi).exp().ln_1p()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Tropical weight: `plus = min`, `times = +`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct TropicalWeight(pub f64);

impl Semiring for TropicalWeight {
    fn zero() -> Self {
        TropicalWeight(f64::INFINITY)
    }
    fn one() -> Self {
        TropicalWeight(0.0)
    }
    fn plus(&self, rhs: &Self) -> Self {
        TropicalWeight(self.0.min(rhs.0))
    }
    fn times(&self, rhs: &Self) -> Self {
        TropicalWeight(self.0 + rhs.0)
    }
    fn from_neg_log(value: f64) -> Self {
        TropicalWeight(value)
    }
    fn neg_log(&self) -> f64 {
        self.0
    }
    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        close(self.0, other.0, tol)
    }
}

/// Log weight: `plus` is log-sum-exp in negative-log space.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogWeight(pub f64);

impl LogWeight {
    /// Builds a weight from a linear-domain probability.
    pub fn from_prob(p: f64) -> Self {
        LogWeight(-p.ln())
    }

    pub fn prob(&self) -> f64 {
        (-self.0).exp()
    }
}

impl Semiring for LogWeight {
    fn zero() -> Self {
        LogWeight(f64::INFINITY)
    }
    fn one() -> Self {
        LogWeight(0.0)
    }
    fn plus(&self, rhs: &Self) -> Self {
        LogWeight(neg_log_sum_exp(self.0, rhs.0))
    }
    fn times(&self, rhs: &Self) -> Self {
        LogWeight(self.0 + rhs.0)
    }
    fn from_neg_log(value: f64) -> Self {
        LogWeight(value)
    }
    fn neg_log(&self) -> f64 {
        self.0
    }
    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        close(self.0, other.0, tol)
    }
}

/// Sparse real vector keyed by dense edit-operation ids.
///
/// Entries are kept sorted by id and never hold an explicit zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        SparseVec::default()
    }

    pub fn basis(id: u32) -> Self {
        SparseVec {
            entries: vec![(id, 1.0)],
        }
    }

    pub fn from_pairs<I: IntoIterator<Item = (u32, f64)>>(pairs: I) -> Self {
        let mut entries: Vec<(u32, f64)> = Vec::new();
        let mut sorted: Vec<(u32, f64)> = pairs.into_iter().collect();
        sorted.sort_by_key(|&(id, _)| id);
        for (id, value) in sorted {
            match entries.last_mut() {
                Some(last) if last.0 == id => last.1 += value,
                _ => entries.push((id, value)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        SparseVec { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: u32) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(k, _)| k)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn scaled(&self, factor: f64) -> SparseVec {
        SparseVec::combine(self, factor, &SparseVec::new(), 0.0)
    }

    /// `a * x + b * y`, merging the two sorted entry lists.
    pub fn combine(x: &SparseVec, a: f64, y: &SparseVec, b: f64) -> SparseVec {
        let mut out = Vec::with_capacity(x.entries.len() + y.entries.len());
        let (mut i, mut j) = (0, 0);
        let (xs, ys) = (&x.entries, &y.entries);
        while i < xs.len() || j < ys.len() {
            let (id, value) = if j >= ys.len() || (i < xs.len() && xs[i].0 < ys[j].0) {
                i += 1;
                (xs[i - 1].0, a * xs[i - 1].1)
            } else if i >= xs.len() || ys[j].0 < xs[i].0 {
                j += 1;
                (ys[j - 1].0, b * ys[j - 1].1)
            } else {
                i += 1;
                j += 1;
                (xs[i - 1].0, a * xs[i - 1].1 + b * ys[j - 1].1)
            };
            if value != 0.0 {
                out.push((id, value));
            }
        }
        SparseVec { entries: out }
    }

    /// Adds `factor * other` into `self` in place.
    pub fn add_scaled(&mut self, other: &SparseVec, factor: f64) {
        *self = SparseVec::combine(self, 1.0, other, factor);
    }

    fn approx_eq(&self, other: &SparseVec, tol: f64) -> bool {
        let mut ids: Vec<u32> = self.entries.iter().map(|e| e.0).collect();
        ids.extend(other.entries.iter().map(|e| e.0));
        ids.into_iter()
            .all(|id| close(self.get(id), other.get(id), tol))
    }
}

/// Expectation-semiring weight `(p, v)`.
///
/// The vector is stored divided by the path mass: `mean = v / p`. In that
/// encoding `times` adds the two means and `plus` takes their mass-weighted
/// average, so the stored entries stay on the scale of edit counts per path
/// instead of underflowing together with `p` on long sentences. The zero
/// element is `(+inf, {})`; an element with `p = 0` and a non-zero vector is
/// not representable and collapses to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationWeight {
    mass: LogWeight,
    mean: SparseVec,
}

impl ExpectationWeight {
    /// Builds `(p, v)` from a negative-log mass and an unnormalized vector.
    pub fn from_parts(neg_log_p: f64, v: &SparseVec) -> Self {
        if neg_log_p == f64::INFINITY {
            return Self::zero();
        }
        ExpectationWeight {
            mass: LogWeight(neg_log_p),
            mean: v.scaled(neg_log_p.exp()),
        }
    }

    pub fn mass(&self) -> LogWeight {
        self.mass
    }

    /// The unnormalized vector `v`.
    pub fn counts(&self) -> SparseVec {
        self.mean.scaled(self.mass.prob())
    }

    /// `v / p`: expected counts under the normalized path distribution.
    pub fn expected_counts(&self) -> &SparseVec {
        &self.mean
    }
}

/// Arc weight for an emission edit operation: `(p, p * e_op)`.
pub fn arc_weight_with_basis(op_id: u32, neg_log_p: f64) -> ExpectationWeight {
    if neg_log_p == f64::INFINITY {
        return ExpectationWeight::zero();
    }
    ExpectationWeight {
        mass: LogWeight(neg_log_p),
        mean: SparseVec::basis(op_id),
    }
}

impl Semiring for ExpectationWeight {
    fn zero() -> Self {
        ExpectationWeight {
            mass: LogWeight::zero(),
            mean: SparseVec::new(),
        }
    }

    fn one() -> Self {
        ExpectationWeight {
            mass: LogWeight::one(),
            mean: SparseVec::new(),
        }
    }

    fn plus(&self, rhs: &Self) -> Self {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let total = self.mass.plus(&rhs.mass);
        let wa = (total.0 - self.mass.0).exp();
        let wb = (total.0 - rhs.mass.0).exp();
        ExpectationWeight {
            mass: total,
            mean: SparseVec::combine(&self.mean, wa, &rhs.mean, wb),
        }
    }

    fn times(&self, rhs: &Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::zero();
        }
        ExpectationWeight {
            mass: self.mass.times(&rhs.mass),
            mean: SparseVec::combine(&self.mean, 1.0, &rhs.mean, 1.0),
        }
    }

    fn from_neg_log(value: f64) -> Self {
        if value == f64::INFINITY {
            return Self::zero();
        }
        ExpectationWeight {
            mass: LogWeight(value),
            mean: SparseVec::new(),
        }
    }

    fn neg_log(&self) -> f64 {
        self.mass.0
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.mass.approx_eq(&other.mass, tol) && self.mean.approx_eq(&other.mean, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lin(p: f64) -> f64 {
        -p.ln()
    }

    #[test]
    fn log_plus_of_equal_weights() {
        let w = LogWeight(0.0).plus(&LogWeight(0.0));
        assert!((w.0 - (-std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn tropical_examples() {
        assert_eq!(
            TropicalWeight(1.5).plus(&TropicalWeight(2.5)),
            TropicalWeight(1.5)
        );
        assert_eq!(
            TropicalWeight::zero().times(&TropicalWeight(0.0)),
            TropicalWeight::zero()
        );
    }

    #[test]
    fn log_times_adds() {
        assert_eq!(LogWeight(1.0).times(&LogWeight(2.0)), LogWeight(3.0));
    }

    #[test]
    fn expectation_plus_is_componentwise() {
        let a = ExpectationWeight::from_parts(lin(0.5), &SparseVec::from_pairs([(0, 0.5)]));
        let b = ExpectationWeight::from_parts(lin(0.25), &SparseVec::from_pairs([(1, 0.25)]));
        let s = a.plus(&b);
        assert!((s.mass().prob() - 0.75).abs() < 1e-12);
        let v = s.counts();
        assert!((v.get(0) - 0.5).abs() < 1e-12);
        assert!((v.get(1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn expectation_times_is_bilinear() {
        let a = ExpectationWeight::from_parts(lin(0.5), &SparseVec::from_pairs([(0, 1.0)]));
        let b = ExpectationWeight::from_parts(lin(0.5), &SparseVec::new());
        let t = a.times(&b);
        assert!((t.mass().prob() - 0.25).abs() < 1e-12);
        assert!((t.counts().get(0) - 0.5).abs() < 1e-12);
        assert_eq!(t.counts().len(), 1);
    }

    #[test]
    fn basis_weights() {
        let w = arc_weight_with_basis(7, 0.0);
        assert_eq!(w.mass(), LogWeight(0.0));
        assert_eq!(w.counts().get(7), 1.0);

        let w = arc_weight_with_basis(3, lin(0.25));
        assert!((w.counts().get(3) - 0.25).abs() < 1e-15);

        let w = arc_weight_with_basis(3, f64::INFINITY);
        assert!(w.is_zero());
        assert!(w.counts().is_empty());
    }

    #[test]
    fn log_sum_exp_extremes() {
        assert_eq!(
            neg_log_sum_exp(-745.0, -745.0),
            -745.0 - std::f64::consts::LN_2
        );
        assert!(neg_log_sum_exp(-745.0, f64::INFINITY) == -745.0);
        assert!(neg_log_sum_exp(f64::INFINITY, f64::INFINITY).is_infinite());
        assert!(neg_log_sum_exp(-745.0, 745.0).is_finite());
    }

    #[test]
    fn sparse_vec_drops_zeros() {
        let a = SparseVec::from_pairs([(1, 1.0), (2, 2.0)]);
        let b = SparseVec::from_pairs([(1, -1.0)]);
        let c = SparseVec::combine(&a, 1.0, &b, 1.0);
        assert_eq!(c.iter().collect::<Vec<_>>(), vec![(2, 2.0)]);
        assert!(SparseVec::from_pairs([(4, 0.0)]).is_empty());
    }

    fn weight_value() -> impl Strategy<Value = f64> {
        prop_oneof![9 => -5.0f64..20.0, 1 => Just(f64::INFINITY)]
    }

    // Multiples of 1/8 keep tropical sums exact in binary floating point.
    fn dyadic_value() -> impl Strategy<Value = f64> {
        prop_oneof![9 => (-40i32..160).prop_map(|x| x as f64 / 8.0), 1 => Just(f64::INFINITY)]
    }

    fn expectation() -> impl Strategy<Value = ExpectationWeight> {
        (
            weight_value(),
            proptest::collection::vec((0u32..6, 0.0f64..3.0), 0..4),
        )
            .prop_map(|(p, v)| ExpectationWeight::from_parts(p, &SparseVec::from_pairs(v)))
    }

    fn check_axioms<W: Semiring>(a: &W, b: &W, c: &W, tol: f64) -> Result<(), TestCaseError> {
        prop_assert!(a.plus(b).approx_eq(&b.plus(a), tol));
        prop_assert!(a.plus(b).plus(c).approx_eq(&a.plus(&b.plus(c)), tol));
        prop_assert!(a.times(b).times(c).approx_eq(&a.times(&b.times(c)), tol));
        prop_assert!(a.times(b).approx_eq(&b.times(a), tol));
        prop_assert!(a
            .times(&b.plus(c))
            .approx_eq(&a.times(b).plus(&a.times(c)), tol));
        prop_assert!(a.plus(&W::zero()).approx_eq(a, tol));
        prop_assert!(a.times(&W::one()).approx_eq(a, tol));
        prop_assert!(a.times(&W::zero()).is_zero());
        Ok(())
    }

    proptest! {
        #[test]
        fn tropical_axioms_exact(a in dyadic_value(), b in dyadic_value(), c in dyadic_value()) {
            let (a, b, c) = (TropicalWeight(a), TropicalWeight(b), TropicalWeight(c));
            check_axioms(&a, &b, &c, 0.0)?;
        }

        #[test]
        fn log_axioms(a in weight_value(), b in weight_value(), c in weight_value()) {
            let (a, b, c) = (LogWeight(a), LogWeight(b), LogWeight(c));
            check_axioms(&a, &b, &c, 1e-10)?;
        }

        #[test]
        fn log_plus_is_below_min(a in -745.0f64..745.0, b in -745.0f64..745.0) {
            let s = LogWeight(a).plus(&LogWeight(b)).0;
            prop_assert!(s.is_finite());
            prop_assert!(s <= a.min(b));
        }

        #[test]
        fn expectation_axioms(a in expectation(), b in expectation(), c in expectation()) {
            check_axioms(&a, &b, &c, 1e-10)?;
        }
    }
}
