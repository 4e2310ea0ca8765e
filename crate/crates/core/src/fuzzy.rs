//! Linguistic variables, piecewise-linear membership functions and
//! crisp classification of negotiation gaps and capability weights.
//!
//! Every built-in variable is a triangular Ruspini partition: the term
//! memberships sum to one at every point of the domain. Gap variables place
//! their peaks at the centres of the crisp bins used by [`classify_gap`], so
//! graded fuzzification and hard binning agree on the dominant term at each
//! peak.

use std::sync::LazyLock;

use thiserror::Error;

/// Tolerance used when checking the partition-of-unity property.
pub const PARTITION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MembershipError {
    #[error("membership function needs at least two breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("breakpoints must be strictly increasing in x (index {0})")]
    NotIncreasing(usize),
    #[error("membership degree {mu} at index {index} is outside [0, 1]")]
    DegreeOutOfRange { index: usize, mu: f64 },
    #[error("non-finite breakpoint at index {0}")]
    NonFinite(usize),
    #[error("variable {variable}: empty or inverted domain [{lo}, {hi}]")]
    BadDomain { variable: String, lo: f64, hi: f64 },
    #[error("variable {variable}: duplicate term '{term}'")]
    DuplicateTerm { variable: String, term: String },
    #[error("variable {variable}: memberships sum to {sum} at x = {x}")]
    NotAPartition { variable: String, x: f64, sum: f64 },
    #[error(
        "variable {variable}: {count} terms reach membership 1 at x = {x}, expected exactly one"
    )]
    AmbiguousEndpoint {
        variable: String,
        x: f64,
        count: usize,
    },
}

/// Membership function defined by `(x, mu)` breakpoints, linear between them
/// and constant beyond the first and last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, MembershipError> {
        if points.len() < 2 {
            return Err(MembershipError::TooFewBreakpoints(points.len()));
        }
        for (index, &(x, mu)) in points.iter().enumerate() {
            if !x.is_finite() || !mu.is_finite() {
                return Err(MembershipError::NonFinite(index));
            }
            if !(0.0..=1.0).contains(&mu) {
                return Err(MembershipError::DegreeOutOfRange { index, mu });
            }
            if index > 0 && x <= points[index - 1].0 {
                return Err(MembershipError::NotIncreasing(index));
            }
        }
        Ok(Self { points })
    }

    /// Triangle rising from `left` to a peak at `peak` and falling to `right`.
    pub fn triangle(left: f64, peak: f64, right: f64) -> Result<Self, MembershipError> {
        Self::new(vec![(left, 0.0), (peak, 1.0), (right, 0.0)])
    }

    /// Shoulder that holds 1 up to `full` and falls to 0 at `zero`.
    pub fn left_shoulder(full: f64, zero: f64) -> Result<Self, MembershipError> {
        Self::new(vec![(full, 1.0), (zero, 0.0)])
    }

    /// Shoulder that is 0 up to `zero` and reaches 1 at `full`.
    pub fn right_shoulder(zero: f64, full: f64) -> Result<Self, MembershipError> {
        Self::new(vec![(zero, 0.0), (full, 1.0)])
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, x: f64) -> f64 {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if x <= first.0 {
            return first.1;
        }
        if x >= last.0 {
            return last.1;
        }
        // First breakpoint strictly right of x; exists because x < last.0.
        let upper = self.points.partition_point(|&(px, _)| px <= x);
        let (x0, y0) = self.points[upper - 1];
        let (x1, y1) = self.points[upper];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Evaluates `mf` at `x`.
pub fn eval_mf(mf: &PiecewiseLinear, x: f64) -> f64 {
    mf.eval(x)
}

/// A named crisp domain partitioned into ordered linguistic terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable {
    name: String,
    lo: f64,
    hi: f64,
    terms: Vec<(String, PiecewiseLinear)>,
}

impl LinguisticVariable {
    /// Builds a variable and checks that its terms form a Ruspini partition.
    ///
    /// Term memberships are piecewise linear, so their sum is piecewise linear
    /// with kinks only at breakpoints. Checking the sum at every breakpoint
    /// inside the domain (plus both ends) is therefore an exact check.
    pub fn new(
        name: impl Into<String>,
        lo: f64,
        hi: f64,
        terms: Vec<(String, PiecewiseLinear)>,
    ) -> Result<Self, MembershipError> {
        let name = name.into();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || terms.is_empty() {
            return Err(MembershipError::BadDomain {
                variable: name,
                lo,
                hi,
            });
        }
        for (i, (term, _)) in terms.iter().enumerate() {
            if terms[..i]
                .iter()
                .any(|(other, _)| other.eq_ignore_ascii_case(term))
            {
                return Err(MembershipError::DuplicateTerm {
                    variable: name,
                    term: term.clone(),
                });
            }
        }
        let var = Self {
            name,
            lo,
            hi,
            terms,
        };

        let mut probes = vec![lo, hi];
        probes.extend(
            var.terms
                .iter()
                .flat_map(|(_, mf)| mf.breakpoints().iter().map(|&(x, _)| x))
                .filter(|x| (lo..=hi).contains(x)),
        );
        for &x in &probes {
            let sum: f64 = var.terms.iter().map(|(_, mf)| mf.eval(x)).sum();
            if (sum - 1.0).abs() > PARTITION_TOLERANCE {
                return Err(MembershipError::NotAPartition {
                    variable: var.name.clone(),
                    x,
                    sum,
                });
            }
        }
        for x in [lo, hi] {
            let count = var
                .terms
                .iter()
                .filter(|(_, mf)| (mf.eval(x) - 1.0).abs() <= PARTITION_TOLERANCE)
                .count();
            if count != 1 {
                return Err(MembershipError::AmbiguousEndpoint {
                    variable: var.name.clone(),
                    x,
                    count,
                });
            }
        }
        Ok(var)
    }

    /// Triangular Ruspini partition over ascending `peaks`.
    ///
    /// The first term is a left shoulder and the last a right shoulder that
    /// stays at 1 from its peak to `hi`.
    pub fn triangular_partition(
        name: &str,
        lo: f64,
        hi: f64,
        term_names: &[&str],
        peaks: &[f64],
    ) -> Result<Self, MembershipError> {
        assert_eq!(term_names.len(), peaks.len(), "one peak per term");
        let n = peaks.len();
        let mut terms = Vec::with_capacity(n);
        for (i, (&term, &peak)) in term_names.iter().zip(peaks).enumerate() {
            let mf = if n == 1 {
                PiecewiseLinear::new(vec![(lo, 1.0), (hi, 1.0)])?
            } else if i == 0 {
                PiecewiseLinear::left_shoulder(peak, peaks[1])?
            } else if i == n - 1 {
                PiecewiseLinear::right_shoulder(peaks[i - 1], peak)?
            } else {
                PiecewiseLinear::triangle(peaks[i - 1], peak, peaks[i + 1])?
            };
            terms.push((term.to_string(), mf));
        }
        Self::new(name, lo, hi, terms)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn terms(&self) -> &[(String, PiecewiseLinear)] {
        &self.terms
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Membership degrees of every term at `x`, clamped into the domain.
    pub fn fuzzify(&self, x: f64) -> MembershipVector {
        let x = self.clamp(x);
        MembershipVector {
            entries: self
                .terms
                .iter()
                .map(|(name, mf)| (name.clone(), mf.eval(x)))
                .collect(),
        }
    }
}

/// Fuzzifies `x` against `var`.
pub fn fuzzify(var: &LinguisticVariable, x: f64) -> MembershipVector {
    var.fuzzify(x)
}

/// Per-term membership degrees in the variable's term order.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVector {
    entries: Vec<(String, f64)>,
}

impl MembershipVector {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn degree(&self, index: usize) -> f64 {
        self.entries[index].1
    }

    pub fn degrees(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, mu)| mu)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.degrees().sum()
    }

    /// Index of the largest degree; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, mu) in self.degrees().enumerate() {
            if mu > self.entries[best].1 {
                best = i;
            }
        }
        best
    }
}

macro_rules! term_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn ordinal(self) -> usize {
                self as usize
            }

            pub fn from_ordinal(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }

            /// Lower-case name as written in rule files.
            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            /// Moves `steps` along the ordered ladder, stopping at either end.
            pub fn shifted(self, steps: i32) -> Self {
                let top = Self::ALL.len() as i32 - 1;
                let index = (self.ordinal() as i32 + steps).clamp(0, top);
                Self::ALL[index as usize]
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.label())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = ();

            /// Case-insensitive, with runs of inner whitespace collapsed.
            fn from_str(s: &str) -> Result<Self, ()> {
                let normalized = s.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase();
                Self::ALL
                    .iter()
                    .copied()
                    .find(|term| term.label() == normalized)
                    .ok_or(())
            }
        }
    };
}
pub(crate) use term_enum;

term_enum! {
    /// Fuzzy value of a performance, funding or deadline gap.
    GapTerm {
        None => "none",
        Low => "low",
        High => "high",
        Extreme => "extreme",
    }
}

term_enum! {
    /// Fuzzy value of a capability weight.
    WeightTerm {
        None => "none",
        Low => "low",
        High => "high",
        Heavy => "heavy",
    }
}

/// Which of the three negotiated quantities a gap measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GapKind {
    Performance,
    Funding,
    Deadline,
}

impl GapKind {
    pub const ALL: [GapKind; 3] = [GapKind::Performance, GapKind::Funding, GapKind::Deadline];

    /// Lower and upper edges `(t1, t2)` of the High bin.
    pub fn thresholds(self) -> (f64, f64) {
        match self {
            GapKind::Performance => (2.0, 7.0),
            GapKind::Funding => (3.5, 6.5),
            GapKind::Deadline => (20.0, 80.0),
        }
    }

    /// Largest gap representable with the crisp input ranges.
    pub fn max_gap(self) -> f64 {
        match self {
            GapKind::Performance | GapKind::Funding => 9.0,
            GapKind::Deadline => 99.0,
        }
    }

    /// Gaps at or below this value count as None.
    pub fn zero_tolerance(self) -> f64 {
        match self {
            GapKind::Funding => 0.05,
            GapKind::Performance | GapKind::Deadline => 0.0,
        }
    }

    /// Term peaks: zero, then the centres of the Low, High and Extreme bins.
    pub fn peaks(self) -> [f64; 4] {
        let (t1, t2) = self.thresholds();
        [0.0, t1 / 2.0, (t1 + t2) / 2.0, (t2 + self.max_gap()) / 2.0]
    }

    pub fn name(self) -> &'static str {
        match self {
            GapKind::Performance => "performance_gap",
            GapKind::Funding => "funding_gap",
            GapKind::Deadline => "deadline_gap",
        }
    }

    pub fn variable(self) -> &'static LinguisticVariable {
        static VARS: LazyLock<[LinguisticVariable; 3]> =
            LazyLock::new(|| GapKind::ALL.map(build_gap_variable));
        match self {
            GapKind::Performance => &VARS[0],
            GapKind::Funding => &VARS[1],
            GapKind::Deadline => &VARS[2],
        }
    }
}

fn build_gap_variable(kind: GapKind) -> LinguisticVariable {
    let labels: Vec<&str> = GapTerm::ALL.iter().map(|t| t.label()).collect();
    LinguisticVariable::triangular_partition(
        kind.name(),
        0.0,
        kind.max_gap(),
        &labels,
        &kind.peaks(),
    )
    .expect("built-in gap partition is valid")
}

/// Peaks of the weight terms over the unit interval.
pub const WEIGHT_PEAKS: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];

pub fn weight_variable() -> &'static LinguisticVariable {
    static VAR: LazyLock<LinguisticVariable> = LazyLock::new(|| {
        let labels: Vec<&str> = WeightTerm::ALL.iter().map(|t| t.label()).collect();
        LinguisticVariable::triangular_partition("weight", 0.0, 1.0, &labels, &WEIGHT_PEAKS)
            .expect("built-in weight partition is valid")
    });
    &VAR
}

pub fn gap_variable(kind: GapKind) -> &'static LinguisticVariable {
    kind.variable()
}

/// Hard binning of a crisp gap. `[t1, t2]` is closed and belongs to High.
pub fn classify_gap(kind: GapKind, gap: f64) -> GapTerm {
    let gap = gap.max(0.0);
    let (t1, t2) = kind.thresholds();
    if gap <= kind.zero_tolerance() {
        GapTerm::None
    } else if gap < t1 {
        GapTerm::Low
    } else if gap <= t2 {
        GapTerm::High
    } else {
        GapTerm::Extreme
    }
}

/// Nearest weight peak; an exact midpoint goes to the higher term.
pub fn classify_weight(w: f64) -> WeightTerm {
    let w = w.clamp(0.0, 1.0);
    let mut best = 0;
    for (i, &peak) in WEIGHT_PEAKS.iter().enumerate() {
        // `<=` lets the later (higher) peak win ties.
        if (w - peak).abs() <= (w - WEIGHT_PEAKS[best]).abs() + 1e-12 {
            best = i;
        }
    }
    WeightTerm::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> PiecewiseLinear {
        PiecewiseLinear::triangle(0.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn eval_mf_examples() {
        assert_eq!(eval_mf(&tri(), 1.0), 1.0);
        assert_eq!(eval_mf(&tri(), 0.5), 0.5);
        assert_eq!(eval_mf(&tri(), 5.0), 0.0);
        assert_eq!(eval_mf(&tri(), -3.0), 0.0);
        let shoulder = PiecewiseLinear::right_shoulder(1.0, 2.0).unwrap();
        assert_eq!(shoulder.eval(10.0), 1.0);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert_eq!(
            PiecewiseLinear::new(vec![(0.0, 1.0)]),
            Err(MembershipError::TooFewBreakpoints(1))
        );
        assert_eq!(
            PiecewiseLinear::new(vec![(0.0, 0.0), (0.0, 1.0)]),
            Err(MembershipError::NotIncreasing(1))
        );
        assert!(matches!(
            PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.5)]),
            Err(MembershipError::DegreeOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn rejects_non_partition_and_duplicates() {
        let a = PiecewiseLinear::left_shoulder(0.0, 1.0).unwrap();
        let b = PiecewiseLinear::right_shoulder(0.0, 2.0).unwrap();
        let err = LinguisticVariable::new(
            "v",
            0.0,
            2.0,
            vec![("a".into(), a.clone()), ("b".into(), b)],
        );
        assert!(matches!(err, Err(MembershipError::NotAPartition { .. })));

        let c = PiecewiseLinear::right_shoulder(0.0, 1.0).unwrap();
        let err = LinguisticVariable::new("v", 0.0, 1.0, vec![("a".into(), a), ("A".into(), c)]);
        assert!(matches!(err, Err(MembershipError::DuplicateTerm { .. })));
    }

    #[test]
    fn fuzzify_performance_gap() {
        let var = gap_variable(GapKind::Performance);
        assert_eq!(GapKind::Performance.peaks(), [0.0, 1.0, 4.5, 8.0]);

        let at_zero: Vec<f64> = var.fuzzify(0.0).degrees().collect();
        assert_eq!(at_zero, vec![1.0, 0.0, 0.0, 0.0]);

        let at_five: Vec<f64> = var.fuzzify(5.0).degrees().collect();
        assert_eq!(at_five[0], 0.0);
        assert_eq!(at_five[1], 0.0);
        assert!((at_five[2] - 3.0 / 3.5).abs() < 1e-12);
        assert!((at_five[3] - 0.5 / 3.5).abs() < 1e-12);

        let clamped: Vec<f64> = var.fuzzify(12.0).degrees().collect();
        assert_eq!(clamped, vec![0.0, 0.0, 0.0, 1.0]);
        let negative: Vec<f64> = var.fuzzify(-4.0).degrees().collect();
        assert_eq!(negative, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn classify_gap_examples() {
        assert_eq!(classify_gap(GapKind::Performance, 0.0), GapTerm::None);
        assert_eq!(classify_gap(GapKind::Performance, 5.0), GapTerm::High);
        assert_eq!(classify_gap(GapKind::Funding, 8.0), GapTerm::Extreme);
        assert_eq!(classify_gap(GapKind::Deadline, 15.0), GapTerm::Low);
    }

    #[test]
    fn classify_gap_boundaries_belong_to_high() {
        for kind in GapKind::ALL {
            let (t1, t2) = kind.thresholds();
            assert_eq!(classify_gap(kind, t1), GapTerm::High);
            assert_eq!(classify_gap(kind, t2), GapTerm::High);
        }
        assert_eq!(classify_gap(GapKind::Funding, 0.049), GapTerm::None);
        assert_eq!(classify_gap(GapKind::Funding, 0.05), GapTerm::None);
        assert_eq!(classify_gap(GapKind::Funding, 0.051), GapTerm::Low);
        assert_eq!(classify_gap(GapKind::Performance, 1.0), GapTerm::Low);
        assert_eq!(classify_gap(GapKind::Deadline, -5.0), GapTerm::None);
    }

    #[test]
    fn classify_weight_examples() {
        assert_eq!(classify_weight(0.0), WeightTerm::None);
        assert_eq!(classify_weight(1.0), WeightTerm::Heavy);
        assert_eq!(classify_weight(0.5), WeightTerm::High);
        assert_eq!(classify_weight(1.0 / 6.0), WeightTerm::Low);
        assert_eq!(classify_weight(0.1), WeightTerm::None);
        assert_eq!(classify_weight(0.9), WeightTerm::Heavy);
        assert_eq!(classify_weight(7.0), WeightTerm::Heavy);
    }

    #[test]
    fn peaks_agree_with_binning() {
        for kind in GapKind::ALL {
            for (expected, &peak) in GapTerm::ALL.iter().zip(kind.peaks().iter()) {
                let mv = kind.variable().fuzzify(peak);
                assert_eq!(GapTerm::ALL[mv.argmax()], *expected, "{kind:?} at {peak}");
                assert_eq!(classify_gap(kind, peak), *expected, "{kind:?} at {peak}");
            }
        }
    }

    #[test]
    fn term_parsing_is_case_insensitive() {
        assert_eq!("EXTREME".parse::<GapTerm>(), Ok(GapTerm::Extreme));
        assert_eq!(" Heavy ".parse::<WeightTerm>(), Ok(WeightTerm::Heavy));
        assert_eq!("heavy".parse::<GapTerm>(), Err(()));
        assert_eq!(GapTerm::Low.shifted(5), GapTerm::Extreme);
        assert_eq!(GapTerm::Low.shifted(-5), GapTerm::None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fuzzify_is_a_partition(x in -5.0f64..120.0, k in 0usize..3) {
                let kind = GapKind::ALL[k];
                let mv = kind.variable().fuzzify(x);
                prop_assert_eq!(mv.len(), 4);
                prop_assert!((mv.sum() - 1.0).abs() <= PARTITION_TOLERANCE);
                prop_assert!(mv.degrees().all(|mu| (0.0..=1.0).contains(&mu)));
            }

            #[test]
            fn classify_gap_is_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0, k in 0usize..3) {
                let kind = GapKind::ALL[k];
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(classify_gap(kind, lo) <= classify_gap(kind, hi));
            }

            #[test]
            fn eval_mf_is_continuous(x in -1.0f64..10.0) {
                let var = gap_variable(GapKind::Performance);
                for (_, mf) in var.terms() {
                    prop_assert!((mf.eval(x + 1e-6) - mf.eval(x)).abs() <= 1e-5);
                }
            }
        }
    }
}
