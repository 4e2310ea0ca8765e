//! Fuzzy Associative Memory: a dense 4×4×4×4 rule table with Mamdani
//! min–max inference and centroid defuzzification.
//!
//! Rule files are CSV with the header
//! `perf_gap,weight,funding_gap,deadline_gap,funding_action,deadline_action`
//! and exactly 256 data rows, one per antecedent.

use std::fmt;
use std::fmt::Write as _;
use std::sync::LazyLock;

use thiserror::Error;

use crate::fuzzy::{
    gap_variable, term_enum, weight_variable, GapKind, GapTerm, LinguisticVariable,
    MembershipVector, PiecewiseLinear, WeightTerm,
};

pub const RULE_COUNT: usize = 256;
pub const RULE_HEADER: &str =
    "perf_gap,weight,funding_gap,deadline_gap,funding_action,deadline_action";

/// Grid size of the trapezoid rule used for defuzzification.
pub const CENTROID_POINTS: usize = 1001;

/// Shipped default rule file.
pub const DEFAULT_RULES_CSV: &str = include_str!("../data/default-rules.csv");

term_enum! {
    /// Funding adjustment term, ordered along the decrease → increase ladder.
    FundingAction {
        DecreaseMuch => "decrease much",
        DecreaseLittle => "decrease little",
        DoNothing => "do nothing",
        IncreaseLittle => "increase little",
        IncreaseMuch => "increase much",
    }
}

term_enum! {
    /// Deadline adjustment term, ordered from shorten to big delay.
    DeadlineAction {
        Shorten => "shorten",
        DoNothing => "do nothing",
        Extend => "extend",
        BigDelay => "big delay",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Antecedent {
    pub perf: GapTerm,
    pub weight: WeightTerm,
    pub funding: GapTerm,
    pub deadline: GapTerm,
}

impl Antecedent {
    pub fn new(perf: GapTerm, weight: WeightTerm, funding: GapTerm, deadline: GapTerm) -> Self {
        Self {
            perf,
            weight,
            funding,
            deadline,
        }
    }

    /// Flat row-major index into the table.
    pub fn index(self) -> usize {
        ((self.perf.ordinal() * 4 + self.weight.ordinal()) * 4 + self.funding.ordinal()) * 4
            + self.deadline.ordinal()
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < RULE_COUNT);
        Self {
            perf: GapTerm::ALL[index / 64],
            weight: WeightTerm::ALL[(index / 16) % 4],
            funding: GapTerm::ALL[(index / 4) % 4],
            deadline: GapTerm::ALL[index % 4],
        }
    }

    /// All 256 antecedents in lexicographic ordinal order.
    pub fn all() -> impl Iterator<Item = Antecedent> {
        (0..RULE_COUNT).map(Self::from_index)
    }
}

impl fmt::Display for Antecedent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.perf, self.weight, self.funding, self.deadline
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Consequent {
    pub funding: FundingAction,
    pub deadline: DeadlineAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FamRule {
    pub antecedent: Antecedent,
    pub consequent: Consequent,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate rule for antecedent {antecedent} (first defined on line {first_line})")]
    DuplicateRule {
        line: u64,
        first_line: u64,
        antecedent: Antecedent,
    },
    #[error("incomplete table: {} of {RULE_COUNT} antecedents missing, first {}", missing.len(), missing[0])]
    IncompleteTable { missing: Vec<Antecedent> },
    #[error("no rule fired; aggregated output is empty")]
    EmptyAggregate,
}

/// Complete rule table indexed by antecedent ordinals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamTable {
    cells: Box<[Consequent; RULE_COUNT]>,
}

impl FamTable {
    /// Builds a table from a cell function evaluated at every antecedent.
    pub fn from_fn(mut f: impl FnMut(Antecedent) -> Consequent) -> Self {
        let cells: Vec<Consequent> = Antecedent::all().map(&mut f).collect();
        Self {
            cells: cells.into_boxed_slice().try_into().expect("256 cells"),
        }
    }

    pub fn get(&self, antecedent: Antecedent) -> Consequent {
        self.cells[antecedent.index()]
    }

    pub fn rules(&self) -> impl Iterator<Item = FamRule> + '_ {
        Antecedent::all().map(|antecedent| FamRule {
            antecedent,
            consequent: self.get(antecedent),
        })
    }

    pub fn len(&self) -> usize {
        RULE_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The table stored in the shipped default rule file.
    pub fn shipped_default() -> &'static FamTable {
        static TABLE: LazyLock<FamTable> = LazyLock::new(|| {
            parse_rules(DEFAULT_RULES_CSV).expect("shipped default rules are valid")
        });
        &TABLE
    }
}

/// Direct cell lookup; no interpolation.
pub fn fam_lookup(
    table: &FamTable,
    perf: GapTerm,
    weight: WeightTerm,
    funding: GapTerm,
    deadline: GapTerm,
) -> (FundingAction, DeadlineAction) {
    let c = table.get(Antecedent::new(perf, weight, funding, deadline));
    (c.funding, c.deadline)
}

/// The published partial rule set: every `(perf, weight)` pair with zero
/// funding and deadline gaps.
pub const BASE_RULES: [(GapTerm, WeightTerm, FundingAction, DeadlineAction); 16] = {
    use DeadlineAction as D;
    use FundingAction as F;
    use GapTerm as G;
    use WeightTerm as W;
    [
        (G::None, W::None, F::DecreaseLittle, D::DoNothing),
        (G::Low, W::None, F::DoNothing, D::Shorten),
        (G::High, W::None, F::IncreaseLittle, D::Extend),
        (G::Extreme, W::None, F::IncreaseLittle, D::BigDelay),
        (G::None, W::Low, F::DecreaseLittle, D::DoNothing),
        (G::Low, W::Low, F::DoNothing, D::Shorten),
        (G::High, W::Low, F::IncreaseLittle, D::Extend),
        (G::Extreme, W::Low, F::IncreaseLittle, D::BigDelay),
        (G::None, W::High, F::DoNothing, D::DoNothing),
        (G::Low, W::High, F::DoNothing, D::DoNothing),
        (G::High, W::High, F::IncreaseMuch, D::DoNothing),
        (G::Extreme, W::High, F::IncreaseMuch, D::DoNothing),
        (G::None, W::Heavy, F::DoNothing, D::DoNothing),
        (G::Low, W::Heavy, F::IncreaseLittle, D::DoNothing),
        (G::High, W::Heavy, F::IncreaseMuch, D::DoNothing),
        (G::Extreme, W::Heavy, F::IncreaseMuch, D::DoNothing),
    ]
};

fn base_rule(perf: GapTerm, weight: WeightTerm) -> Consequent {
    let &(_, _, funding, deadline) = BASE_RULES
        .iter()
        .find(|(p, w, _, _)| *p == perf && *w == weight)
        .expect("base rules cover every (perf, weight) pair");
    Consequent { funding, deadline }
}

fn funding_shift(funding_gap: GapTerm, weight: WeightTerm) -> i32 {
    match (funding_gap, weight) {
        (GapTerm::None | GapTerm::Low, _) => 0,
        (GapTerm::High, WeightTerm::High | WeightTerm::Heavy) => 1,
        (GapTerm::High, _) => -1,
        (GapTerm::Extreme, WeightTerm::Heavy) => 2,
        (GapTerm::Extreme, WeightTerm::High) => 1,
        (GapTerm::Extreme, WeightTerm::Low) => -1,
        (GapTerm::Extreme, WeightTerm::None) => -2,
    }
}

fn deadline_shift(deadline_gap: GapTerm) -> i32 {
    match deadline_gap {
        GapTerm::None | GapTerm::Low => 0,
        GapTerm::High => 1,
        GapTerm::Extreme => 2,
    }
}

/// Completes the 16 published rules to a full table by shifting each base
/// consequent along its action ladder according to the funding and deadline
/// gap terms.
pub fn generate_default_rules() -> FamTable {
    FamTable::from_fn(|a| {
        let base = base_rule(a.perf, a.weight);
        Consequent {
            funding: base.funding.shifted(funding_shift(a.funding, a.weight)),
            deadline: base.deadline.shifted(deadline_shift(a.deadline)),
        }
    })
}

fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, line: u64) -> Result<T, FamError> {
    raw.parse().map_err(|_| FamError::Parse {
        line,
        message: format!("unknown {what} '{}'", raw.trim()),
    })
}

/// Parses and validates a CSV rule file into a complete table.
pub fn parse_rules(text: &str) -> Result<FamTable, FamError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut cells: Vec<Option<(Consequent, u64)>> = vec![None; RULE_COUNT];
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| FamError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: format!("malformed row: {e}"),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !saw_header {
            let header: Vec<String> = record.iter().map(str::to_ascii_lowercase).collect();
            if header.join(",") != RULE_HEADER {
                return Err(FamError::Parse {
                    line,
                    message: format!("expected header '{RULE_HEADER}'"),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() != 6 {
            return Err(FamError::Parse {
                line,
                message: format!("expected 6 columns, found {}", record.len()),
            });
        }
        let antecedent = Antecedent::new(
            parse_field(&record[0], "performance gap term", line)?,
            parse_field(&record[1], "weight term", line)?,
            parse_field(&record[2], "funding gap term", line)?,
            parse_field(&record[3], "deadline gap term", line)?,
        );
        let consequent = Consequent {
            funding: parse_field(&record[4], "funding action", line)?,
            deadline: parse_field(&record[5], "deadline action", line)?,
        };
        let slot = &mut cells[antecedent.index()];
        if let Some((_, first_line)) = *slot {
            return Err(FamError::DuplicateRule {
                line,
                first_line,
                antecedent,
            });
        }
        *slot = Some((consequent, line));
    }
    if !saw_header {
        return Err(FamError::Parse {
            line: 1,
            message: "empty rule file".into(),
        });
    }

    let missing: Vec<Antecedent> = Antecedent::all()
        .filter(|a| cells[a.index()].is_none())
        .collect();
    if !missing.is_empty() {
        return Err(FamError::IncompleteTable { missing });
    }
    Ok(FamTable::from_fn(|a| {
        cells[a.index()].expect("checked complete").0
    }))
}

/// Header plus 256 rows in lexicographic antecedent order.
pub fn serialize_rules(table: &FamTable) -> String {
    let mut out = String::with_capacity(RULE_COUNT * 48);
    out.push_str(RULE_HEADER);
    out.push('\n');
    for rule in table.rules() {
        let a = rule.antecedent;
        let c = rule.consequent;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            a.perf, a.weight, a.funding, a.deadline, c.funding, c.deadline
        );
    }
    out
}

/// Output variable for the funding adjustment, in millions per round.
pub fn funding_output_variable() -> &'static LinguisticVariable {
    static VAR: LazyLock<LinguisticVariable> = LazyLock::new(|| {
        let labels: Vec<&str> = FundingAction::ALL.iter().map(|a| a.label()).collect();
        LinguisticVariable::triangular_partition(
            "funding_adjustment",
            -2.0,
            2.0,
            &labels,
            &[-2.0, -1.0, 0.0, 1.0, 2.0],
        )
        .expect("funding output partition is valid")
    });
    &VAR
}

/// Output variable for the deadline adjustment, in wave cycles.
pub fn deadline_output_variable() -> &'static LinguisticVariable {
    static VAR: LazyLock<LinguisticVariable> = LazyLock::new(|| {
        let mf = |r: Result<PiecewiseLinear, _>| r.expect("deadline output term is valid");
        let terms = vec![
            (
                "shorten".to_string(),
                mf(PiecewiseLinear::left_shoulder(-10.0, 0.0)),
            ),
            (
                "do nothing".to_string(),
                mf(PiecewiseLinear::triangle(-10.0, 0.0, 10.0)),
            ),
            (
                "extend".to_string(),
                mf(PiecewiseLinear::triangle(0.0, 10.0, 30.0)),
            ),
            (
                "big delay".to_string(),
                mf(PiecewiseLinear::right_shoulder(10.0, 30.0)),
            ),
        ];
        LinguisticVariable::new("deadline_adjustment", -20.0, 40.0, terms)
            .expect("deadline output partition is valid")
    });
    &VAR
}

/// Output terms clipped at their aggregate activations and combined by max.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedAggregate<'a> {
    variable: &'a LinguisticVariable,
    clips: Vec<f64>,
}

impl<'a> ClippedAggregate<'a> {
    pub fn new(variable: &'a LinguisticVariable, clips: Vec<f64>) -> Self {
        assert_eq!(
            variable.term_count(),
            clips.len(),
            "one clip level per term"
        );
        Self { variable, clips }
    }

    pub fn clips(&self) -> &[f64] {
        &self.clips
    }

    pub fn membership(&self, x: f64) -> f64 {
        self.variable
            .terms()
            .iter()
            .zip(&self.clips)
            .filter(|(_, &clip)| clip > 0.0)
            .map(|((_, mf), &clip)| mf.eval(x).min(clip))
            .fold(0.0, f64::max)
    }

    /// Index of the term with the largest clip level.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &clip) in self.clips.iter().enumerate() {
            if clip > self.clips[best] {
                best = i;
            }
        }
        best
    }

    pub fn centroid(&self) -> Result<f64, FamError> {
        let (lo, hi) = self.variable.domain();
        defuzz_centroid((lo, hi), |x| self.membership(x))
    }
}

/// Centre of mass of `shape` over `domain` by the trapezoid rule on a
/// uniform 1001-point grid.
pub fn defuzz_centroid(domain: (f64, f64), shape: impl Fn(f64) -> f64) -> Result<f64, FamError> {
    let (lo, hi) = domain;
    let intervals = (CENTROID_POINTS - 1) as f64;
    let step = (hi - lo) / intervals;
    let mut moment = 0.0;
    let mut area = 0.0;
    for i in 0..CENTROID_POINTS {
        let x = if i == CENTROID_POINTS - 1 {
            hi
        } else {
            lo + i as f64 * step
        };
        let weight = if i == 0 || i == CENTROID_POINTS - 1 {
            0.5
        } else {
            1.0
        };
        let mu = shape(x);
        moment += weight * x * mu;
        area += weight * mu;
    }
    if area <= 0.0 {
        return Err(FamError::EmptyAggregate);
    }
    Ok(moment / area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiredRule {
    pub rule: FamRule,
    pub activation: f64,
}

/// Input memberships in `(perf, weight, funding, deadline)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMemberships {
    pub perf: MembershipVector,
    pub weight: MembershipVector,
    pub funding: MembershipVector,
    pub deadline: MembershipVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub funding_adjustment: f64,
    pub deadline_adjustment: f64,
    /// Aggregate activation per funding action, in ladder order.
    pub funding_activations: Vec<f64>,
    /// Aggregate activation per deadline action, in ladder order.
    pub deadline_activations: Vec<f64>,
    pub fired: Vec<FiredRule>,
    pub memberships: InputMemberships,
}

impl InferenceResult {
    pub fn dominant_funding(&self) -> FundingAction {
        FundingAction::ALL[argmax(&self.funding_activations)]
    }

    pub fn dominant_deadline(&self) -> DeadlineAction {
        DeadlineAction::ALL[argmax(&self.deadline_activations)]
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mamdani inference: min over antecedent memberships, clip each consequent
/// term at its strongest activation, max-combine, take the centroid.
pub fn infer(
    table: &FamTable,
    perf_gap: f64,
    weight: f64,
    funding_gap: f64,
    deadline_gap: f64,
) -> Result<InferenceResult, FamError> {
    let memberships = InputMemberships {
        perf: gap_variable(GapKind::Performance).fuzzify(perf_gap),
        weight: weight_variable().fuzzify(weight),
        funding: gap_variable(GapKind::Funding).fuzzify(funding_gap),
        deadline: gap_variable(GapKind::Deadline).fuzzify(deadline_gap),
    };
    let active = |mv: &MembershipVector| -> Vec<(usize, f64)> {
        mv.degrees()
            .enumerate()
            .filter(|&(_, mu)| mu > 0.0)
            .collect()
    };
    let (perf, wt, fund, dead) = (
        active(&memberships.perf),
        active(&memberships.weight),
        active(&memberships.funding),
        active(&memberships.deadline),
    );

    let mut funding_activations = vec![0.0f64; FundingAction::ALL.len()];
    let mut deadline_activations = vec![0.0f64; DeadlineAction::ALL.len()];
    let mut fired = Vec::new();
    for &(p, mp) in &perf {
        for &(w, mw) in &wt {
            for &(f, mf) in &fund {
                for &(d, md) in &dead {
                    let antecedent = Antecedent::new(
                        GapTerm::ALL[p],
                        WeightTerm::ALL[w],
                        GapTerm::ALL[f],
                        GapTerm::ALL[d],
                    );
                    let consequent = table.get(antecedent);
                    let activation = mp.min(mw).min(mf).min(md);
                    let fa = &mut funding_activations[consequent.funding.ordinal()];
                    *fa = fa.max(activation);
                    let da = &mut deadline_activations[consequent.deadline.ordinal()];
                    *da = da.max(activation);
                    fired.push(FiredRule {
                        rule: FamRule {
                            antecedent,
                            consequent,
                        },
                        activation,
                    });
                }
            }
        }
    }
    if fired.is_empty() {
        return Err(FamError::EmptyAggregate);
    }

    let funding_adjustment =
        ClippedAggregate::new(funding_output_variable(), funding_activations.clone()).centroid()?;
    let deadline_adjustment =
        ClippedAggregate::new(deadline_output_variable(), deadline_activations.clone())
            .centroid()?;
    Ok(InferenceResult {
        funding_adjustment,
        deadline_adjustment,
        funding_activations,
        deadline_activations,
        fired,
        memberships,
    })
}
