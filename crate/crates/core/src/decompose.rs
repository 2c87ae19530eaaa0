//! Parity moments of symmetric distributions, exact decomposition into the
//! canonical family, and nearest convex mixtures.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::dist::{ExactDistribution, WeightDistribution};
use crate::error::{Error, Result};
use crate::exact::{binomial, format_rational, to_f64, Rational};
use crate::lp::{l1_fit_simplex, l1_objective};
use crate::mixture::{bias_levels, component_weights, components, moment_base, Component, SignedMixtureSpec};

/// Largest `n` for which string-level fitting is allowed.
pub const STRING_LEVEL_MAX_N: usize = 14;

/// `M_s` for `s = 0..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentProfile {
    pub n: usize,
    pub moments: Vec<Rational>,
}

impl MomentProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,moment,moment_f64\n");
        for (s, m) in self.moments.iter().enumerate() {
            out.push_str(&format!("{s},{},{}\n", format_rational(m), to_f64(m)));
        }
        out
    }
}

/// `E[chi_S]` with `S = {0, .., s-1}`, by enumerating every string.
pub fn parity_moment_dense(p: &ExactDistribution, s: usize) -> Result<Rational> {
    if s > p.n() {
        return Err(Error::Parameter(format!("s = {s} exceeds n = {}", p.n())));
    }
    let mask = (1usize << s) - 1;
    let mut acc = BigInt::zero();
    for (x, c) in p.counts().iter().enumerate() {
        if (x & mask).count_ones() % 2 == 0 {
            acc += BigInt::from(c.clone());
        } else {
            acc -= BigInt::from(c.clone());
        }
    }
    Ok(BigRational::new(acc, BigInt::from(p.denom().clone())))
}

/// Krawtchouk value `K_s(w) = sum_j (-1)^j C(w,j) C(n-w,s-j)`.
fn krawtchouk(n: usize, s: usize, w: usize) -> BigInt {
    let mut acc = BigInt::zero();
    for j in 0..=s.min(w) {
        if s - j > n - w {
            continue;
        }
        let term = BigInt::from(binomial(w, j) * binomial(n - w, s - j));
        if j % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

/// `E[chi_S]` averaged over all `|S| = s`, from the weight law. For a
/// symmetric distribution every such `S` gives this value.
pub fn weight_parity_moment(w: &WeightDistribution, s: usize) -> Result<Rational> {
    let n = w.n();
    if s > n {
        return Err(Error::Parameter(format!("s = {s} exceeds n = {n}")));
    }
    let total: Rational = w
        .probs()
        .iter()
        .enumerate()
        .map(|(k, p)| p * BigRational::from_integer(krawtchouk(n, s, k)))
        .sum();
    Ok(total / BigRational::from_integer(BigInt::from(binomial(n, s))))
}

/// Symmetric fast path; fails on a non-symmetric distribution.
pub fn parity_moment_symmetric(p: &ExactDistribution, s: usize) -> Result<Rational> {
    if !p.is_symmetric() {
        return Err(Error::Precondition("fast moment path needs a symmetric distribution".into()));
    }
    weight_parity_moment(&p.weight_distribution(), s)
}

/// `E[chi_S]` for `|S| = s`: fast path on symmetric inputs, otherwise the
/// dense path with `S = {0, .., s-1}`.
pub fn parity_moment(p: &ExactDistribution, s: usize) -> Result<Rational> {
    if p.is_symmetric() {
        weight_parity_moment(&p.weight_distribution(), s)
    } else {
        parity_moment_dense(p, s)
    }
}

/// Moments `M_0..M_n` of the weight law (averaged over `S` when `p` is not
/// symmetric).
pub fn moment_profile(p: &ExactDistribution) -> Result<MomentProfile> {
    weight_moment_profile(&p.weight_distribution())
}

pub fn weight_moment_profile(w: &WeightDistribution) -> Result<MomentProfile> {
    let moments = (0..=w.n()).map(|s| weight_parity_moment(w, s)).collect::<Result<_>>()?;
    Ok(MomentProfile { n: w.n(), moments })
}

/// Solves `sum_a c_a b_a^s = M_s` for `s = 1..=K` (K = number of bias
/// levels), then splits the remaining mass between evens and odds using `M_0`
/// and `M_n`. Evens and odds only show up in `M_0` and `M_n`, and every
/// `b_a != 0`, so for `n > K` the answer is unique.
///
/// At `n = K` the family is not identifiable (evens on `K` bits is itself a
/// mix of biased products); rows `s = 0..K` are used instead, which returns
/// the representation with `c_e + c_o = 0`.
pub fn vandermonde_decompose(profile: &MomentProfile, d: u32) -> Result<SignedMixtureSpec> {
    let levels = bias_levels(d);
    let k = levels.len();
    let n = profile.n;
    if n < k {
        return Err(Error::Precondition(format!(
            "decomposition at d = {d} needs n >= {k}, got n = {n}"
        )));
    }
    if profile.moments.len() != n + 1 {
        return Err(Error::Input("moment profile length is not n + 1".into()));
    }
    let bases: Vec<Rational> = levels.iter().map(|&a| moment_base(a, d)).collect();
    let first = if n > k { 1 } else { 0 };
    // row s: [b_0^s .. b_{K-1}^s | M_s]
    let system: Vec<Vec<Rational>> = (first..first + k)
        .map(|s| {
            bases
                .iter()
                .map(|b| num_traits::pow(b.clone(), s))
                .chain(std::iter::once(profile.moments[s].clone()))
                .collect()
        })
        .collect();
    let c = solve_fraction_free(system)?;
    let c_a: BTreeMap<u64, Rational> = levels.iter().copied().zip(c.iter().cloned()).collect();
    let bias_mass: Rational = c.iter().sum();
    let top: Rational = c
        .iter()
        .zip(&bases)
        .map(|(ci, b)| ci * num_traits::pow(b.clone(), n))
        .sum();
    let sum_eo = Rational::one() - bias_mass;
    let diff_eo = &profile.moments[n] - top;
    let two = BigRational::from_integer(2.into());
    let c_e = (&sum_eo + &diff_eo) / &two;
    let c_o = (sum_eo - diff_eo) / two;
    SignedMixtureSpec::new(d, c_a, c_e, c_o)
}

/// Bareiss elimination on an augmented rational system. Each row is first
/// scaled to integers; the pivots stay integral throughout.
fn solve_fraction_free(system: Vec<Vec<Rational>>) -> Result<Vec<Rational>> {
    let k = system.len();
    let mut a: Vec<Vec<BigInt>> = system
        .into_iter()
        .map(|row| {
            let l = row
                .iter()
                .fold(BigInt::one(), |acc, v| num_integer::Integer::lcm(&acc, v.denom()));
            row.into_iter().map(|v| (v * BigRational::from_integer(l.clone())).to_integer()).collect()
        })
        .collect();
    let mut prev = BigInt::one();
    for col in 0..k {
        let piv = (col..k)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::Precondition("singular moment system".into()))?;
        a.swap(col, piv);
        for r in col + 1..k {
            for c in col + 1..=k {
                let v = (&a[col][col] * &a[r][c] - &a[r][col] * &a[col][c]) / &prev;
                a[r][c] = v;
            }
            a[r][col] = BigInt::zero();
        }
        prev = a[col][col].clone();
    }
    let mut x = vec![Rational::zero(); k];
    for r in (0..k).rev() {
        let mut rhs = BigRational::from_integer(a[r][k].clone());
        for c in r + 1..k {
            rhs -= BigRational::from_integer(a[r][c].clone()) * &x[c];
        }
        x[r] = rhs / BigRational::from_integer(a[r][r].clone());
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Convexity {
    pub representable: bool,
    pub witness: Component,
    pub witness_value: Rational,
}

/// Representable iff every coefficient is at least `-tolerance`.
pub fn check_convexity(spec: &SignedMixtureSpec, tolerance: &Rational) -> Convexity {
    let (witness, witness_value) = spec.min_coefficient();
    Convexity {
        representable: witness_value >= -tolerance.clone(),
        witness,
        witness_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitLevel {
    String,
    Weight,
}

impl std::str::FromStr for FitLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "string" => Ok(FitLevel::String),
            "weight" => Ok(FitLevel::Weight),
            other => Err(Error::Parameter(format!("unknown level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NearestMixture {
    pub d: u32,
    pub level: FitLevel,
    /// Canonical order; nonnegative, summing to one.
    pub coefficients: Vec<(Component, f64)>,
    /// Total variation between the target and the fitted mixture.
    pub tv: f64,
}

impl NearestMixture {
    pub fn coefficient(&self, c: Component) -> f64 {
        self.coefficients.iter().find(|(k, _)| *k == c).map(|(_, v)| *v).unwrap_or(0.0)
    }

    pub fn to_json(&self) -> Value {
        let mut c = serde_json::Map::new();
        for (comp, v) in &self.coefficients {
            if let Component::Bias(a) = comp {
                c.insert(format!("a={a}"), json!(v));
            }
        }
        json!({
            "d": self.d,
            "C": null,
            "c": c,
            "c_e": self.coefficient(Component::Evens),
            "c_o": self.coefficient(Component::Odds),
            "level": match self.level { FitLevel::String => "string", FitLevel::Weight => "weight" },
            "tv": self.tv,
        })
    }
}

/// Per-component weight laws in canonical order, as `[w][k]`.
pub(crate) fn family_weight_matrix(d: u32, n: usize) -> Result<(Vec<Component>, Vec<Vec<f64>>)> {
    let comps = components(d);
    let laws: Vec<Vec<f64>> = comps
        .iter()
        .map(|&c| component_weights(c, d, n).map(|w| w.probs_f64()))
        .collect::<Result<_>>()?;
    let rows = (0..=n).map(|w| laws.iter().map(|l| l[w]).collect()).collect();
    Ok((comps, rows))
}

/// Minimum-tv convex mixture of the family, at the weight or string level.
pub fn nearest_mixture(p: &ExactDistribution, d: u32, level: FitLevel) -> Result<NearestMixture> {
    let n = p.n();
    let k = bias_levels(d).len();
    if n < k {
        return Err(Error::Precondition(format!("fitting at d = {d} needs n >= {k}, got n = {n}")));
    }
    let (comps, weight_rows) = family_weight_matrix(d, n)?;
    let (rows, targets, mult) = match level {
        FitLevel::Weight => {
            let t = p.weight_distribution().probs_f64();
            (weight_rows, t, vec![1.0; n + 1])
        }
        FitLevel::String => {
            if n > STRING_LEVEL_MAX_N {
                return Err(Error::Resource(format!(
                    "string-level fitting is capped at n = {STRING_LEVEL_MAX_N}"
                )));
            }
            // strings of equal weight and equal mass share a residual row
            let mut groups: BTreeMap<(usize, BigUint), usize> = BTreeMap::new();
            for (x, c) in p.counts().iter().enumerate() {
                *groups.entry((x.count_ones() as usize, c.clone())).or_default() += 1;
            }
            let den = to_f64(&BigRational::from_integer(BigInt::from(p.denom().clone())));
            let mut rows = Vec::with_capacity(groups.len());
            let mut targets = Vec::with_capacity(groups.len());
            let mut mult = Vec::with_capacity(groups.len());
            for ((w, c), m) in groups {
                let size = to_f64(&BigRational::from_integer(BigInt::from(binomial(n, w))));
                rows.push(weight_rows[w].iter().map(|v| v / size).collect());
                targets.push(to_f64(&BigRational::from_integer(BigInt::from(c))) / den);
                mult.push(m as f64);
            }
            (rows, targets, mult)
        }
    };
    let fit = l1_fit_simplex(&rows, &targets, &mult)?;
    let tv = 0.5 * l1_objective(&rows, &targets, &mult, &fit.coefficients);
    Ok(NearestMixture {
        d,
        level,
        coefficients: comps.into_iter().zip(fit.coefficients).collect(),
        tv,
    })
}

/// Total variation between `p` and a real-coefficient mixture, evaluated
/// string by string (independent of the fitting code path).
pub fn mixture_tv_f64(p: &ExactDistribution, d: u32, coefficients: &[(Component, f64)], level: FitLevel) -> Result<f64> {
    let n = p.n();
    let mut law = vec![0.0; n + 1];
    for &(c, v) in coefficients {
        for (slot, q) in law.iter_mut().zip(component_weights(c, d, n)?.probs_f64()) {
            *slot += v * q;
        }
    }
    Ok(match level {
        FitLevel::Weight => {
            let w = p.weight_distribution().probs_f64();
            0.5 * w.iter().zip(&law).map(|(a, b)| (a - b).abs()).sum::<f64>()
        }
        FitLevel::String => {
            let probs = p.probs_f64();
            let sizes: Vec<f64> = (0..=n).map(|w| to_f64(&BigRational::from_integer(BigInt::from(binomial(n, w))))).collect();
            0.5 * probs
                .iter()
                .enumerate()
                .map(|(x, px)| {
                    let w = x.count_ones() as usize;
                    (px - law[w] / sizes[w]).abs()
                })
                .sum::<f64>()
        }
    })
}

/// Exact-rational convexity of the decomposed profile of `p`.
pub fn decompose_distribution(p: &ExactDistribution, d: u32) -> Result<SignedMixtureSpec> {
    vandermonde_decompose(&moment_profile(p)?, d)
}
