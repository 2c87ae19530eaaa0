//! Coefficient vectors over the canonical family: biased products
//! `U_{a/2^d}^n` for `a != 2^(d-1)`, plus `evens` and `odds`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::dist::{ExactDistribution, WeightDistribution};
use crate::error::{Error, Result};
use crate::exact::{dyadic, dyadic_exponent, format_rational, rational_from_json, Rational};

/// One member of the canonical family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    /// `U_{a/2^d}^n`.
    Bias(u64),
    Evens,
    Odds,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Bias(a) => write!(f, "a={a}"),
            Component::Evens => f.write_str("evens"),
            Component::Odds => f.write_str("odds"),
        }
    }
}

/// Admissible bias numerators `a in [0, 2^d]`, skipping `2^(d-1)`.
pub fn bias_levels(d: u32) -> Vec<u64> {
    let top = 1u64 << d;
    (0..=top).filter(|&a| d == 0 || a != top / 2).collect()
}

/// Components in canonical order: biases ascending, then evens, odds.
pub fn components(d: u32) -> Vec<Component> {
    bias_levels(d)
        .into_iter()
        .map(Component::Bias)
        .chain([Component::Evens, Component::Odds])
        .collect()
}

/// `b_a = 1 - a / 2^(d-1)`, the parity moment base of `U_{a/2^d}`.
pub fn moment_base(a: u64, d: u32) -> Rational {
    Rational::one() - dyadic(2 * a, d as usize)
}

/// Weight law of one family member.
pub fn component_weights(c: Component, d: u32, n: usize) -> Result<WeightDistribution> {
    match c {
        Component::Bias(a) => WeightDistribution::binomial(n, &dyadic(a, d as usize)),
        Component::Evens => WeightDistribution::parity_class(n, false),
        Component::Odds => WeightDistribution::parity_class(n, true),
    }
}

/// Coefficients that sum to one but may be negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedMixtureSpec {
    pub d: u32,
    pub c_a: BTreeMap<u64, Rational>,
    pub c_e: Rational,
    pub c_o: Rational,
}

impl SignedMixtureSpec {
    /// Missing bias levels are filled with zero.
    pub fn new(d: u32, mut c_a: BTreeMap<u64, Rational>, c_e: Rational, c_o: Rational) -> Result<Self> {
        let levels = bias_levels(d);
        if let Some(a) = c_a.keys().find(|a| !levels.contains(a)) {
            return Err(Error::Parameter(format!("bias level a = {a} not admissible for d = {d}")));
        }
        for a in levels {
            c_a.entry(a).or_insert_with(Rational::zero);
        }
        let spec = SignedMixtureSpec { d, c_a, c_e, c_o };
        if !spec.total().is_one() {
            return Err(Error::Parameter(format!("coefficients sum to {}", spec.total())));
        }
        Ok(spec)
    }

    /// Single-component spec.
    pub fn pure(d: u32, c: Component) -> Result<Self> {
        let mut s = SignedMixtureSpec {
            d,
            c_a: bias_levels(d).into_iter().map(|a| (a, Rational::zero())).collect(),
            c_e: Rational::zero(),
            c_o: Rational::zero(),
        };
        *s.coefficient_mut(c)? = Rational::one();
        Ok(s)
    }

    fn total(&self) -> Rational {
        self.c_a.values().sum::<Rational>() + &self.c_e + &self.c_o
    }

    pub fn coefficient(&self, c: Component) -> Rational {
        match c {
            Component::Bias(a) => self.c_a.get(&a).cloned().unwrap_or_else(Rational::zero),
            Component::Evens => self.c_e.clone(),
            Component::Odds => self.c_o.clone(),
        }
    }

    fn coefficient_mut(&mut self, c: Component) -> Result<&mut Rational> {
        match c {
            Component::Bias(a) => self
                .c_a
                .get_mut(&a)
                .ok_or_else(|| Error::Parameter(format!("bias level a = {a} not admissible"))),
            Component::Evens => Ok(&mut self.c_e),
            Component::Odds => Ok(&mut self.c_o),
        }
    }

    /// `(component, coefficient)` pairs in canonical order.
    pub fn coefficients(&self) -> Vec<(Component, Rational)> {
        components(self.d)
            .into_iter()
            .map(|c| (c, self.coefficient(c)))
            .collect()
    }

    /// Most negative (or smallest) coefficient, first in canonical order on ties.
    pub fn min_coefficient(&self) -> (Component, Rational) {
        self.coefficients()
            .into_iter()
            .reduce(|best, cur| if cur.1 < best.1 { cur } else { best })
            .expect("family is nonempty")
    }

    /// Weight law `sum_c coef_c * |component_c|`; signed when coefficients are.
    pub fn weight_law(&self, n: usize) -> Result<Vec<Rational>> {
        let mut acc = vec![Rational::zero(); n + 1];
        for (c, coef) in self.coefficients() {
            if coef.is_zero() {
                continue;
            }
            let w = component_weights(c, self.d, n)?;
            for (slot, p) in acc.iter_mut().zip(w.probs()) {
                *slot += &coef * p;
            }
        }
        Ok(acc)
    }

    /// Weight distribution; fails if some weight gets negative mass.
    pub fn weight_distribution(&self, n: usize) -> Result<WeightDistribution> {
        let law = self.weight_law(n)?;
        if law.iter().any(|p| p.is_negative()) {
            return Err(Error::Precondition("signed mixture has negative weight mass".into()));
        }
        WeightDistribution::new(n, law)
    }

    /// The mixture as a distribution over strings.
    pub fn string_distribution(&self, n: usize) -> Result<ExactDistribution> {
        self.weight_distribution(n)?.to_symmetric()
    }

    /// `E[chi_S]` for `|S| = s` under the mixture on `n` bits.
    pub fn moment(&self, n: usize, s: usize) -> Rational {
        let mut m: Rational = self
            .c_a
            .iter()
            .map(|(&a, c)| c * num_traits::pow(moment_base(a, self.d), s))
            .sum();
        if s == n {
            m += &self.c_e - &self.c_o;
        }
        m
    }

    pub fn to_json(&self, granularity: Option<u32>) -> Value {
        let mut c = Map::new();
        for (a, v) in &self.c_a {
            c.insert(format!("a={a}"), json!(format_rational(v)));
        }
        json!({
            "d": self.d,
            "C": granularity,
            "c": c,
            "c_e": format_rational(&self.c_e),
            "c_o": format_rational(&self.c_o),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let d = v
            .get("d")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Format("missing d".into()))? as u32;
        let mut c_a = BTreeMap::new();
        if let Some(map) = v.get("c").and_then(Value::as_object) {
            for (k, val) in map {
                let a: u64 = k
                    .strip_prefix("a=")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad coefficient key {k:?}")))?;
                c_a.insert(a, rational_from_json(val)?);
            }
        }
        let c_e = v.get("c_e").map(rational_from_json).transpose()?.unwrap_or_else(Rational::zero);
        let c_o = v.get("c_o").map(rational_from_json).transpose()?.unwrap_or_else(Rational::zero);
        Self::new(d, c_a, c_e, c_o)
    }
}

/// A genuine mixture: nonnegative coefficients, with the bias coefficients
/// multiples of `2^-C` when a granularity is recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixtureSpec {
    coefficients: SignedMixtureSpec,
    granularity: Option<u32>,
}

impl MixtureSpec {
    pub fn new(coefficients: SignedMixtureSpec, granularity: Option<u32>) -> Result<Self> {
        let (c, v) = coefficients.min_coefficient();
        if v.is_negative() {
            return Err(Error::Parameter(format!("coefficient of {c} is negative ({v})")));
        }
        if let Some(g) = granularity {
            let scale = BigRational::from_integer(BigInt::from(crate::exact::pow2(g as usize)));
            if let Some((a, _)) = coefficients.c_a.iter().find(|(_, v)| !(*v * &scale).is_integer()) {
                return Err(Error::Parameter(format!("c_{a} is not a multiple of 2^-{g}")));
            }
        }
        Ok(MixtureSpec {
            coefficients,
            granularity,
        })
    }

    /// Smallest granularity that fits the bias coefficients, if they are dyadic.
    pub fn with_fitted_granularity(coefficients: SignedMixtureSpec) -> Result<Self> {
        let g = coefficients
            .c_a
            .values()
            .map(dyadic_exponent)
            .try_fold(0usize, |acc, e| e.map(|e| acc.max(e)));
        Self::new(coefficients, g.map(|g| g as u32))
    }

    pub fn signed(&self) -> &SignedMixtureSpec {
        &self.coefficients
    }

    pub fn into_signed(self) -> SignedMixtureSpec {
        self.coefficients
    }

    pub fn granularity(&self) -> Option<u32> {
        self.granularity
    }

    pub fn d(&self) -> u32 {
        self.coefficients.d
    }

    pub fn coefficient(&self, c: Component) -> Rational {
        self.coefficients.coefficient(c)
    }

    pub fn weight_distribution(&self, n: usize) -> Result<WeightDistribution> {
        self.coefficients.weight_distribution(n)
    }

    pub fn string_distribution(&self, n: usize) -> Result<ExactDistribution> {
        self.coefficients.string_distribution(n)
    }

    pub fn to_json(&self) -> Value {
        self.coefficients.to_json(self.granularity)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let coefficients = SignedMixtureSpec::from_json(v)?;
        let granularity = v.get("C").and_then(Value::as_u64).map(|c| c as u32);
        Self::new(coefficients, granularity)
    }

    /// Random spec whose every coefficient is a multiple of `2^-granularity`.
    pub fn random<R: Rng>(d: u32, granularity: u32, rng: &mut R) -> MixtureSpec {
        let comps = components(d);
        let mut units = vec![0u64; comps.len()];
        for _ in 0..1u64 << granularity {
            units[rng.gen_range(0..comps.len())] += 1;
        }
        let mut spec = SignedMixtureSpec::pure(d, comps[0]).expect("first component exists");
        for (c, u) in comps.iter().zip(units) {
            *spec.coefficient_mut(*c).expect("component admissible") = dyadic(u, granularity as usize);
        }
        MixtureSpec::new(spec, Some(granularity)).expect("random spec is valid")
    }
}
