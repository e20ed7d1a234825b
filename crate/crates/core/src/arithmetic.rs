//! Exact integer and rational arithmetic behind the degree–index bound for
//! harmonic maps RP² → S^{2m}: closed-form bounds, the brute-force case
//! enumeration of its failure system, and replayable proof traces.
//!
//! No floating point is used anywhere in this module.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search ceiling for m; well above the cutoff the argument derives.
pub const ENUMERATION_MAX_M: i64 = 64;

/// Exact rational value in lowest terms with positive denominator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RationalBound(pub BigRational);

impl RationalBound {
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Self {
        RationalBound(BigRational::new(num.into(), den.into()))
    }

    pub fn integer(n: impl Into<BigInt>) -> Self {
        RationalBound(BigRational::from_integer(n.into()))
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    /// Smallest integer ≥ the bound: what an integer quantity bounded below by it must reach.
    pub fn ceil(&self) -> BigInt {
        self.0.ceil().to_integer()
    }
}

impl fmt::Display for RationalBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for RationalBound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RationalBound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let parse = |t: &str| t.trim().parse::<BigInt>().map_err(serde::de::Error::custom);
        match s.split_once('/') {
            Some((n, q)) => {
                let q = parse(q)?;
                if q.is_zero() {
                    return Err(serde::de::Error::custom("zero denominator"));
                }
                Ok(RationalBound::new(parse(n)?, q))
            }
            None => Ok(RationalBound::integer(parse(&s)?)),
        }
    }
}

/// Largest odd k with k² ≤ x.
pub fn odd_floor_sqrt(x: u64) -> Result<u64> {
    if x == 0 {
        return Err(Error::Validation("odd_floor_sqrt needs x ≥ 1".into()));
    }
    let r = x.sqrt();
    Ok(if r % 2 == 1 { r } else { r - 1 })
}

fn check_degree(m: u64, d: u64) -> Result<()> {
    if m == 0 {
        return Err(Error::Validation("m must be positive".into()));
    }
    if 2 * d < m * (m + 1) {
        return Err(Error::Validation(format!(
            "degree {d} is below the minimum m(m+1)/2 = {} of a linearly full map into S^{}",
            m * (m + 1) / 2,
            2 * m
        )));
    }
    Ok(())
}

/// ind_E ≥ 2(m−1)(2d − [√(8d+1)]_odd + 2) for linearly full maps S² → S^{2m}.
pub fn ind_e_lower_bound(m: u64, d: u64) -> Result<BigInt> {
    check_degree(m, d)?;
    let k = odd_floor_sqrt(8 * d + 1)?;
    Ok(BigInt::from(2) * BigInt::from(m - 1) * (BigInt::from(2 * d) - BigInt::from(k) + BigInt::from(2)))
}

/// Candidate (m, d, ν) with ν standing for the spectral nullity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaseTriple {
    pub m: i64,
    pub d: i64,
    pub nu: i64,
}

impl CaseTriple {
    pub fn validate(&self) -> Result<()> {
        let CaseTriple { m, d, nu } = *self;
        if m < 2 || m % 2 != 0 {
            return Err(Error::Validation(format!("m = {m} must be even and ≥ 2")));
        }
        if nu % 2 == 0 || nu < 2 * m + 1 {
            return Err(Error::Validation(format!("ν = {nu} must be odd and ≥ 2m + 1 = {}", 2 * m + 1)));
        }
        if 2 * d < m * (m + 1) {
            return Err(Error::Validation(format!("d = {d} below m(m+1)/2")));
        }
        Ok(())
    }
}

/// Lower bound for ind_S combining the index, nullity and energy bounds:
/// ((2d − ν + 2)(m − 1) + 2d − m − m²)/(2m + 1).
pub fn ind_s_lower_bound_unchecked(m: i64, d: i64, nu: i64) -> RationalBound {
    let num = (2 * d - nu + 2) * (m - 1) + 2 * d - m - m * m;
    RationalBound::new(num, 2 * m + 1)
}

/// The same bound for a validated case triple.
pub fn ind_s_lower_bound(case: CaseTriple) -> Result<RationalBound> {
    case.validate()?;
    Ok(ind_s_lower_bound_unchecked(case.m, case.d, case.nu))
}

/// Constraints of the failure system; each can be toggled off as a control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// m is even (maps from RP² into S^{2m}).
    EvenM,
    /// ν is odd.
    OddNullity,
    /// ν ≥ 2m + 1.
    NullityAtLeastTarget,
    /// d ≥ m(m+1)/2.
    MinimalDegree,
    /// 8d ≥ ν² − 1.
    NullityDegree,
}

impl Constraint {
    pub const ALL: [Constraint; 5] =
        [Constraint::EvenM, Constraint::OddNullity, Constraint::NullityAtLeastTarget, Constraint::MinimalDegree, Constraint::NullityDegree];

    pub fn name(&self) -> &'static str {
        match self {
            Constraint::EvenM => "even-m",
            Constraint::OddNullity => "odd-nullity",
            Constraint::NullityAtLeastTarget => "nullity-at-least-2m+1",
            Constraint::MinimalDegree => "minimal-degree",
            Constraint::NullityDegree => "nullity-degree",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Constraint::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown constraint {s:?}; expected one of even-m, odd-nullity, nullity-at-least-2m+1, minimal-degree, nullity-degree")))
    }
}

/// (2m − 2)ν + 2m² + 3 − 4m ≥ (2m − 1)d: what ind_S ≤ (d − 1)/2 together
/// with the combined lower bound forces.
pub fn failure_inequality(m: i64, d: i64, nu: i64) -> bool {
    (2 * m - 2) * nu + 2 * m * m + 3 - 4 * m >= (2 * m - 1) * d
}

/// Equivalent form of the failure inequality straight from the bound:
/// (d − 1)/2 ≥ ind_S lower bound.
pub fn failure_from_bound(m: i64, d: i64, nu: i64) -> bool {
    RationalBound::new(d - 1, 2) >= ind_s_lower_bound_unchecked(m, d, nu)
}

/// Enumeration result with the triples that realise each exceptional pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enumeration {
    pub active: Vec<Constraint>,
    pub max_m: i64,
    pub exceptions: BTreeSet<(i64, i64)>,
    pub witnesses: Vec<CaseTriple>,
}

/// All (m, d), 2 ≤ m ≤ max_m, for which some ν satisfies the failure
/// inequality together with the active constraints.
///
/// For fixed m the failure inequality bounds d above linearly in ν while the
/// nullity–degree constraint bounds it below quadratically, so ν ranges over a
/// finite window that the search detects and leaves. Without that constraint
/// the window is unbounded and `nu_cap` truncates it.
pub fn enumerate_with(active: &[Constraint], max_m: i64, nu_cap: i64) -> Enumeration {
    let on = |c: Constraint| active.contains(&c);
    let mut exceptions = BTreeSet::new();
    let mut witnesses = Vec::new();
    for m in 2..=max_m {
        if on(Constraint::EvenM) && m % 2 != 0 {
            continue;
        }
        let nu_min = if on(Constraint::NullityAtLeastTarget) { 2 * m + 1 } else { 1 };
        let d_floor = if on(Constraint::MinimalDegree) { (m * (m + 1) + 1) / 2 } else { 1 };
        let mut nu = nu_min;
        while nu <= nu_cap {
            if on(Constraint::OddNullity) && nu % 2 == 0 {
                nu += 1;
                continue;
            }
            // failure inequality: d ≤ ((2m−2)ν + 2m² + 3 − 4m)/(2m − 1)
            let top = (2 * m - 2) * nu + 2 * m * m + 3 - 4 * m;
            let d_max = top.div_euclid(2 * m - 1);
            // nullity–degree: d ≥ (ν² − 1)/8
            let d_low = if on(Constraint::NullityDegree) { (nu * nu - 1 + 7).div_euclid(8) } else { 1 };
            let lo = d_floor.max(d_low).max(1);
            if on(Constraint::NullityDegree) && d_low > d_max && nu * (2 * m - 1) > 4 * (2 * m - 2) {
                // the quadratic lower bound has overtaken the linear upper bound for good
                break;
            }
            for d in lo..=d_max {
                debug_assert!(failure_inequality(m, d, nu));
                exceptions.insert((m, d));
                witnesses.push(CaseTriple { m, d, nu });
            }
            nu += 1;
        }
    }
    let mut active = active.to_vec();
    active.sort();
    Enumeration { active, max_m, exceptions, witnesses }
}

/// ν cap; it only binds when the nullity–degree constraint is dropped,
/// since otherwise the search window closes on its own.
pub const RELAXED_NU_CAP: i64 = 128;

/// The exceptional set of the failure system with every constraint active.
pub fn enumerate_exceptions() -> BTreeSet<(i64, i64)> {
    enumerate_with(&Constraint::ALL, ENUMERATION_MAX_M, RELAXED_NU_CAP).exceptions
}

/// Exceptional set with the named constraints removed.
pub fn enumerate_without(dropped: &[Constraint]) -> Enumeration {
    let active: Vec<Constraint> = Constraint::ALL.into_iter().filter(|c| !dropped.contains(c)).collect();
    enumerate_with(&active, ENUMERATION_MAX_M, RELAXED_NU_CAP)
}

/// Cutoffs on m derived independently of the enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCutoff {
    /// Largest m ≤ max with 8 + √(8m+1) ≥ m(m−1)/2, the relaxed chain
    /// ν ≤ 8 + √(8m+1) and ν ≥ d − m ≥ m(m−1)/2, decided in integers.
    pub chain_cutoff: i64,
    /// Largest m for which the integer system ν + m ≥ d ≥ (ν² − 1)/8,
    /// d ≥ m(m+1)/2 (no parity constraints) is feasible.
    pub sharp_cutoff: i64,
    /// Largest m appearing in the full enumeration.
    pub enumeration_max: i64,
}

/// 8 + √(8m+1) ≥ t for integer t, without square roots of non-squares:
/// true iff t ≤ 8 or (t − 8)² ≤ 8m + 1.
fn chain_holds(m: i64) -> bool {
    let t2 = m * (m - 1); // 2·m(m−1)/2, so compare with doubled quantities
    // 8 + √(8m+1) ≥ m(m−1)/2  ⇔  16 + 2√(8m+1) ≥ t2
    if t2 <= 16 {
        return true;
    }
    let excess = t2 - 16; // 2√(8m+1) ≥ excess ⇔ 4(8m+1) ≥ excess²
    4 * (8 * m + 1) >= excess * excess
}

pub fn derive_m_cutoff() -> MCutoff {
    let chain_cutoff = (2..=ENUMERATION_MAX_M).filter(|&m| chain_holds(m)).max().unwrap_or(1);
    let sharp_feasible = |m: i64| {
        let d_floor = (m * (m + 1) + 1) / 2;
        // ν + m ≥ d ≥ (ν² − 1)/8 needs ν² − 8ν − (8m + 1) ≤ 0, so ν ≤ 8 + 8m suffices as a search range
        (1..=8 + 8 * m).any(|nu| {
            let lo = d_floor.max((nu * nu - 1 + 7).div_euclid(8));
            lo <= nu + m
        })
    };
    let sharp_cutoff = (2..=ENUMERATION_MAX_M).filter(|&m| sharp_feasible(m)).max().unwrap_or(1);
    let enumeration_max = enumerate_exceptions().iter().map(|&(m, _)| m).max().unwrap_or(0);
    MCutoff { chain_cutoff, sharp_cutoff, enumeration_max }
}

/// One step of a machine-checked inequality chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub inequality_name: String,
    pub lhs: RationalBound,
    pub rhs: RationalBound,
    /// One of ">=", ">", "<=", "<", "=".
    pub relation: String,
    pub source_citation: String,
    pub holds: bool,
}

impl TraceStep {
    fn new(name: &str, lhs: RationalBound, relation: &str, rhs: RationalBound, citation: &str) -> Self {
        let holds = match relation {
            ">=" => lhs >= rhs,
            ">" => lhs > rhs,
            "<=" => lhs <= rhs,
            "<" => lhs < rhs,
            _ => lhs == rhs,
        };
        TraceStep { inequality_name: name.into(), lhs, rhs, relation: relation.into(), source_citation: citation.into(), holds }
    }
}

/// Replay of the two contradiction arguments of the induction step k → k+1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductionTrace {
    pub k: u64,
    pub strict_premise: bool,
    pub steps: Vec<TraceStep>,
    /// Strict improvement Λ_{k+1} > 4π(2k+3) is refuted.
    pub growth_contradiction: bool,
    /// Attainment of Λ_k = 4π(2k+1) by a metric for k > 1 is refuted.
    pub attainment_contradiction: bool,
}

impl InductionTrace {
    pub fn contradiction_derived(&self) -> bool {
        self.growth_contradiction && (self.k <= 1 || self.attainment_contradiction)
    }
}

const CITE_DEGREE_INDEX: &str = "ind_S(Φ) ≥ (d − 1)/2 for harmonic Φ: RP² → S^n, equality iff d = 3";
const CITE_EXTREMAL: &str = "a maximiser of λ̄_k is induced by a harmonic map with ind_S ≤ k";
const CITE_AREA: &str = "λ̄_k(g_Φ) = 2 Area = 2 E(Φ) = 4πd";

/// Replays, for one k, both contradiction chains: growth past 4π(2k+3)
/// forces d > 2k+3 (d ≥ 2k+3 when `strict_premise` is false, a control that
/// must fail to yield a contradiction) yet ind_S ≤ k+1; attainment at k > 1
/// forces d = 2k+1 > 3 with ind_S ≤ k and strict degree–index inequality.
pub fn verify_induction_step_with(k: u64, strict_premise: bool) -> Result<InductionTrace> {
    if k == 0 {
        return Err(Error::Validation("induction step needs k ≥ 1".into()));
    }
    let kk = BigInt::from(k);
    let int = |v: &BigInt| RationalBound(BigRational::from_integer(v.clone()));
    let one = BigInt::one();
    let mut steps = Vec::new();

    // growth: 4πd = λ̄ > 4π(2k+3) ⇒ smallest admissible integer d
    let bound = BigInt::from(2) * &kk + BigInt::from(3);
    let d = if strict_premise { &bound + &one } else { bound.clone() };
    steps.push(TraceStep::new("degree_from_area", int(&d), if strict_premise { ">" } else { ">=" }, int(&bound), CITE_AREA));
    let lower = RationalBound(BigRational::new(&d - &one, BigInt::from(2)));
    let ceiling = int(&(&kk + &one));
    steps.push(TraceStep::new("index_from_degree", lower.clone(), "<=", ceiling.clone(), CITE_DEGREE_INDEX));
    // contradiction: k+1 ≥ ind_S ≥ (d−1)/2 > k+1
    let growth_step = TraceStep::new("growth_contradiction", lower, ">", ceiling.clone(), CITE_EXTREMAL);
    let growth_contradiction = growth_step.holds;
    steps.push(growth_step);

    // attainment for k > 1: d = 2k + 1 > 3, strict bound ind_S > (d − 1)/2 = k ≥ ind_S
    let mut attainment_contradiction = false;
    if k > 1 {
        let d2 = BigInt::from(2) * &kk + &one;
        let gt3 = TraceStep::new("degree_exceeds_three", int(&d2), ">", RationalBound::integer(3), CITE_DEGREE_INDEX);
        let half = RationalBound(BigRational::new(&d2 - &one, BigInt::from(2)));
        // ind_S is an integer strictly above (d−1)/2, so ind_S ≥ ⌊(d−1)/2⌋ + 1
        let forced = RationalBound(BigRational::from_integer(half.0.floor().to_integer() + &one));
        let contra = TraceStep::new("attainment_contradiction", forced, ">", int(&kk), CITE_EXTREMAL);
        attainment_contradiction = gt3.holds && contra.holds;
        steps.push(gt3);
        steps.push(contra);
    }
    Ok(InductionTrace { k, strict_premise, steps, growth_contradiction, attainment_contradiction })
}

pub fn verify_induction_step(k: u64) -> Result<InductionTrace> {
    verify_induction_step_with(k, true)
}

/// Proof trace of the case analysis for one exceptional-candidate search:
/// every witness triple as the failure inequality it satisfies.
pub fn enumeration_trace(e: &Enumeration) -> Vec<TraceStep> {
    e.witnesses
        .iter()
        .map(|c| {
            let lhs = RationalBound::integer((2 * c.m - 2) * c.nu + 2 * c.m * c.m + 3 - 4 * c.m);
            let rhs = RationalBound::integer((2 * c.m - 1) * c.d);
            TraceStep::new(
                &format!("failure_system(m={},d={},nu={})", c.m, c.d, c.nu),
                lhs,
                ">=",
                rhs,
                "(2m−2)ν + 2m² + 3 − 4m ≥ (2m−1)d, from (d−1)/2 ≥ ind_S lower bound",
            )
        })
        .collect()
}

/// An exact rational multiple of π.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultipleOfPi {
    pub coefficient: RationalBound,
}

impl fmt::Display for MultipleOfPi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}π", self.coefficient)
    }
}

/// Normalised eigenvalue λ·Area of a disjoint union of pieces that all share
/// the eigenvalue λ, each piece given by its own normalised first eigenvalue
/// (so its area is that value over λ).
fn union_limit(pieces: &[BigRational]) -> BigRational {
    // with λ = 1 the areas equal the normalised values
    let lambda = BigRational::one();
    let total_area: BigRational = pieces.iter().map(|p| p / &lambda).sum();
    lambda * total_area
}

/// λ̄ of k − 1 round spheres (8π each) and one round projective plane (12π)
/// sharing one eigenvalue: 4π(2k + 1).
pub fn composite_limit(k: u64) -> Result<MultipleOfPi> {
    if k == 0 {
        return Err(Error::Validation("k must be ≥ 1".into()));
    }
    let mut pieces = vec![BigRational::from_integer(BigInt::from(8)); (k - 1) as usize];
    pieces.push(BigRational::from_integer(BigInt::from(12)));
    Ok(MultipleOfPi { coefficient: RationalBound(union_limit(&pieces)) })
}

/// λ̄ of k round spheres sharing one eigenvalue: 8πk.
pub fn composite_limit_spheres(k: u64) -> Result<MultipleOfPi> {
    if k == 0 {
        return Err(Error::Validation("k must be ≥ 1".into()));
    }
    let pieces = vec![BigRational::from_integer(BigInt::from(8)); k as usize];
    Ok(MultipleOfPi { coefficient: RationalBound(union_limit(&pieces)) })
}

/// Area ratio projective plane : sphere in the composite limit.
pub fn composite_area_ratio() -> RationalBound {
    RationalBound::new(12, 8)
}

/// Degree and spectral indices of the Veronese maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VeroneseForms {
    pub d: u64,
    pub ind_s_sphere: u64,
    /// Only for even m, where the map descends to RP².
    pub ind_s_rp2: Option<u64>,
}

pub fn veronese_closed_forms(m: u64) -> Result<VeroneseForms> {
    if m == 0 {
        return Err(Error::Validation("m must be ≥ 1".into()));
    }
    Ok(VeroneseForms {
        d: m * (m + 1) / 2,
        ind_s_sphere: (0..m).map(|i| 2 * i + 1).sum(),
        ind_s_rp2: (m % 2 == 0).then(|| m * (m - 1) / 2),
    })
}

/// RP² spectral index of the Veronese map, an error for odd m.
pub fn veronese_rp2_index(m: u64) -> Result<u64> {
    veronese_closed_forms(m)?
        .ind_s_rp2
        .ok_or_else(|| Error::Validation(format!("Veronese map of odd m = {m} does not descend to RP²")))
}

/// Report-only: whether ind_S = 2d − (nul_S − 1)/2, a suggested formula that
/// is not a theorem.
pub fn suggested_index_formula(d: i64, ind_s: i64, nul_s: i64) -> Option<bool> {
    if nul_s % 2 == 0 {
        return None;
    }
    Some(ind_s == 2 * d - (nul_s - 1) / 2)
}

/// Report-only: maps RP² → S⁴ are known to have odd degree.
pub fn s4_degree_parity(m: u64, d: u64) -> Option<bool> {
    (m == 2).then_some(d % 2 == 1)
}

/// Sign of a bound, for callers that only need positivity.
pub fn is_positive(b: &RationalBound) -> bool {
    b.0.is_positive()
}
