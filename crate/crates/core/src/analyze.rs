//! Conditioning a local function on its high-degree inputs and rebuilding a
//! canonical mixture from the restricted pieces.
//!
//! For each assignment `rho` to the high-degree set `S`, the restricted
//! function `f_rho` is enumerated exactly. Its mean weight picks a bias level
//! `a_rho`; a level of `2^(d-1)` (mean weight `n/2`) means the piece behaves
//! like a parity class, and its evens/odds split is the exact probability
//! that the output weight is even. The recovered mixture has granularity
//! `|S|`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::dist::{
    kolmogorov, kwise_violations, output_distribution_with_cap, parity_split_kolmogorov, tv, ExactDistribution,
    ParityGaps, WeightDistribution, DEFAULT_ENUM_CAP_BITS,
};
use crate::error::{Error, Result};
use crate::exact::{dyadic, format_rational, pow2, rat, round_half_down, to_f64, Rational};
use crate::localfn::LocalFunction;
use crate::mixture::{bias_levels, MixtureSpec, SignedMixtureSpec};
use crate::samplers::F2Polynomial;

/// Inputs read by at least `n / a` gates. `a >= 1`.
pub fn high_degree_inputs(f: &LocalFunction, a: f64) -> Result<Vec<usize>> {
    if !(a >= 1.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("A = {a} must be a finite number >= 1")));
    }
    let n = f.n as f64;
    Ok(f.degree_profile()
        .degrees
        .iter()
        .enumerate()
        .filter(|(_, &deg)| deg > 0 && deg as f64 * a >= n)
        .map(|(i, _)| i)
        .collect())
}

/// Outcome of one restriction `f_rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    /// `rho` as `(input, value)` pairs in input order.
    pub rho: Vec<(usize, bool)>,
    pub a_rho: u64,
    pub gamma: Rational,
    /// Mass of weights `w` with `|w/n - gamma| > radius`.
    pub escape_mass: Rational,
    pub exception_set: Vec<usize>,
    pub parity_even_prob: Rational,
    /// Mean weight equals `n/2` or `a_rho = 2^(d-1)`: handled by evens/odds.
    pub parity_branch: bool,
    pub distribution: ExactDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningReport {
    pub d: u32,
    pub high_degree: Vec<usize>,
    pub radius: Rational,
    pub k: usize,
    pub entries: Vec<Conditioning>,
}

impl ConditioningReport {
    /// `f(U^m)`: every restriction carries mass `2^-|S|`.
    pub fn full_distribution(&self) -> Result<ExactDistribution> {
        let first = &self.entries[0].distribution;
        let n = first.n();
        let common = self.entries.iter().all(|e| e.distribution.denom() == first.denom());
        if common {
            let mut counts = vec![BigUint::zero(); 1 << n];
            for e in &self.entries {
                counts.iter_mut().zip(e.distribution.counts()).for_each(|(a, c)| *a += c);
            }
            return ExactDistribution::new(n, first.denom() << self.high_degree.len(), counts);
        }
        let share = dyadic(1, self.high_degree.len());
        let parts: Vec<(Rational, &ExactDistribution)> =
            self.entries.iter().map(|e| (share.clone(), &e.distribution)).collect();
        ExactDistribution::mixture(&parts)
    }
}

/// Maps a weight law to its bias level; returns `(a_rho, parity_branch)`.
fn bias_level(w: &WeightDistribution, d: u32) -> (u64, bool) {
    let n = w.n();
    let mean: Rational = w
        .probs()
        .iter()
        .enumerate()
        .map(|(k, p)| p * BigRational::from_integer(BigInt::from(k)))
        .sum();
    let gamma = if n == 0 { rat(0, 1) } else { &mean / BigRational::from_integer(BigInt::from(n)) };
    let scaled = &gamma * BigRational::from_integer(BigInt::from(pow2(d as usize)));
    let a = round_half_down(&scaled).to_u64().unwrap_or(0).min(1u64 << d);
    let half = gamma == rat(1, 2);
    let parity = half || (d > 0 && a == 1u64 << (d - 1));
    (a, parity)
}

fn escape_mass(w: &WeightDistribution, gamma: &Rational, radius: &Rational) -> Rational {
    let n = BigRational::from_integer(BigInt::from(w.n().max(1)));
    w.probs()
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let dev = BigRational::from_integer(BigInt::from(*k)) / &n - gamma;
            crate::exact::abs(&dev) > *radius
        })
        .map(|(_, p)| p.clone())
        .sum()
}

fn parity_even(p: &ExactDistribution) -> Rational {
    let even: BigUint = p
        .counts()
        .iter()
        .enumerate()
        .filter(|(x, _)| x.count_ones() % 2 == 0)
        .map(|(_, c)| c.clone())
        .sum();
    BigRational::new(BigInt::from(even), BigInt::from(p.denom().clone()))
}

/// Restricts `f` on every assignment to `s` and measures each piece.
/// The cap bounds the total enumeration work over all restrictions.
pub fn condition_and_bias(
    f: &LocalFunction,
    s: &[usize],
    d: u32,
    radius: &Rational,
    k: usize,
    cap_bits: u32,
) -> Result<ConditioningReport> {
    if s.len() > cap_bits as usize {
        return Err(Error::Resource(format!("2^{} conditionings exceed the cap 2^{cap_bits}", s.len())));
    }
    if let Some(&i) = s.iter().find(|&&i| i >= f.m) {
        return Err(Error::Input(format!("conditioning input {i} out of range")));
    }
    if s.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("conditioning set must be sorted and distinct".into()));
    }
    if k > f.n {
        return Err(Error::Parameter(format!("k = {k} exceeds n = {}", f.n)));
    }
    let per_rho_cap = cap_bits - s.len() as u32;
    let entries = (0..1u64 << s.len())
        .into_par_iter()
        .map(|sigma| {
            let rho: Vec<(usize, bool)> = s
                .iter()
                .enumerate()
                .map(|(b, &i)| (i, (sigma >> b) & 1 == 1))
                .collect();
            let assignment: BTreeMap<usize, bool> = rho.iter().copied().collect();
            let f_rho = f.restrict(&assignment)?;
            let distribution = output_distribution_with_cap(&f_rho, per_rho_cap)?;
            let w = distribution.weight_distribution();
            let (a_rho, parity_branch) = bias_level(&w, d);
            let gamma = if parity_branch { rat(1, 2) } else { dyadic(a_rho, d as usize) };
            let escape_mass = escape_mass(&w, &gamma, radius);
            let exception_set = kwise_violations(&distribution, k, &gamma)?.exception_set;
            Ok(Conditioning {
                rho,
                a_rho,
                gamma,
                escape_mass,
                exception_set,
                parity_even_prob: parity_even(&distribution),
                parity_branch,
                distribution,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditioningReport {
        d,
        high_degree: s.to_vec(),
        radius: radius.clone(),
        k,
        entries,
    })
}

/// Exception set of a restricted output distribution.
pub fn find_exception_set(f_rho: &ExactDistribution, k: usize, gamma: &Rational) -> Result<Vec<usize>> {
    Ok(kwise_violations(f_rho, k, gamma)?.exception_set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuity {
    pub max_gap: Rational,
    /// `max_gap / (delta / n)`; `None` when `delta = 0`.
    pub ratio: Option<f64>,
}

/// `max_w |W(w) - W(w + delta)|` over `w + delta <= n`.
pub fn continuity_profile(w: &WeightDistribution, delta: usize, parity_constrained: bool) -> Result<Continuity> {
    let n = w.n();
    if delta > n {
        return Err(Error::Parameter(format!("delta = {delta} exceeds n = {n}")));
    }
    if parity_constrained && delta % 2 == 1 {
        return Err(Error::Parameter("parity-constrained profile needs an even delta".into()));
    }
    let max_gap = (0..=n - delta)
        .map(|k| crate::exact::abs(&(w.prob(k) - w.prob(k + delta))))
        .max()
        .unwrap_or_else(Rational::zero);
    let ratio = (delta > 0).then(|| to_f64(&max_gap) * n as f64 / delta as f64);
    Ok(Continuity { max_gap, ratio })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conformance {
    pub kolmogorov: Rational,
    pub eta: Rational,
    pub gaps: ParityGaps,
}

/// Kolmogorov distance to `Bin(n, gamma)` and parity-split gaps at
/// `eta = Pr[weight even]`.
pub fn kolmogorov_conformance(p: &ExactDistribution, gamma: &Rational) -> Result<Conformance> {
    let w = p.weight_distribution();
    let bin = WeightDistribution::binomial(p.n(), gamma)?;
    let eta = parity_even(p);
    Ok(Conformance {
        kolmogorov: kolmogorov(&w, &bin)?,
        gaps: parity_split_kolmogorov(&w, &eta)?,
        eta,
    })
}

/// ANF of `xor_j f_j`, the parity of the output weight.
pub fn parity_polynomial(f: &LocalFunction) -> Result<F2Polynomial> {
    let report = f.validate();
    if let Some(v) = report.violations.first() {
        return Err(Error::Input(format!("invalid local function: {}", v.rule)));
    }
    let mut p = F2Polynomial::zero(f.m);
    for g in &f.outputs {
        for mono in F2Polynomial::from_table(f.m, &g.input_indices, &g.table).monomials() {
            p.toggle(mono.clone());
        }
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct ClassificationResult {
    pub spec: MixtureSpec,
    pub tv_strings: Rational,
    pub tv_weights: Rational,
    pub tv_symmetrized: Rational,
    pub report: ConditioningReport,
}

#[derive(Debug, Clone)]
pub struct ClassifyParams {
    pub d: u32,
    pub a: f64,
    pub radius: Rational,
    pub k: usize,
    pub cap_bits: u32,
}

impl ClassifyParams {
    pub fn new(d: u32) -> Self {
        ClassifyParams {
            d,
            a: 2.0,
            radius: dyadic(1, d as usize) * rat(1, 10),
            k: 2,
            cap_bits: DEFAULT_ENUM_CAP_BITS,
        }
    }
}

/// Conditions on high-degree inputs and assembles the mixture
/// `c_a = #{rho : a_rho = a} / 2^|S|`, with evens/odds mass from the parity
/// pieces.
pub fn classify(f: &LocalFunction, params: &ClassifyParams) -> Result<ClassificationResult> {
    let d = params.d;
    let s = high_degree_inputs(f, params.a)?;
    let report = condition_and_bias(f, &s, d, &params.radius, params.k.min(f.n), params.cap_bits)?;
    let share = dyadic(1, s.len());
    let mut c_a: BTreeMap<u64, Rational> = bias_levels(d).into_iter().map(|a| (a, Rational::zero())).collect();
    let mut c_e = Rational::zero();
    let mut c_o = Rational::zero();
    for e in &report.entries {
        if e.parity_branch {
            c_e += &share * &e.parity_even_prob;
            c_o += &share * (Rational::one() - &e.parity_even_prob);
        } else {
            *c_a.get_mut(&e.a_rho).expect("non-parity level is admissible") += &share;
        }
    }
    let spec = MixtureSpec::new(SignedMixtureSpec::new(d, c_a, c_e, c_o)?, Some(s.len() as u32))?;
    let p = report.full_distribution()?;
    let q = spec.string_distribution(f.n)?;
    let tv_strings = tv(&p, &q)?;
    let tv_weights = p.weight_distribution().tv(&q.weight_distribution())?;
    let tv_symmetrized = tv(&p, &p.symmetrize())?;
    Ok(ClassificationResult {
        spec,
        tv_strings,
        tv_weights,
        tv_symmetrized,
        report,
    })
}

impl ClassificationResult {
    pub fn to_json(&self) -> Value {
        let entries: Vec<Value> = self
            .report
            .entries
            .iter()
            .map(|e| {
                json!({
                    "rho": e.rho.iter().map(|(i, v)| json!([i, u8::from(*v)])).collect::<Vec<_>>(),
                    "a_rho": e.a_rho,
                    "gamma": format_rational(&e.gamma),
                    "escape_mass": format_rational(&e.escape_mass),
                    "exception_set": e.exception_set,
                    "parity_even_prob": format_rational(&e.parity_even_prob),
                    "parity_branch": e.parity_branch,
                })
            })
            .collect();
        json!({
            "spec": self.spec.to_json(),
            "high_degree": self.report.high_degree,
            "radius": format_rational(&self.report.radius),
            "k": self.report.k,
            "tv_strings": format_rational(&self.tv_strings),
            "tv_weights": format_rational(&self.tv_weights),
            "tv_symmetrized": format_rational(&self.tv_symmetrized),
            "tv_strings_f64": to_f64(&self.tv_strings),
            "tv_weights_f64": to_f64(&self.tv_weights),
            "tv_symmetrized_f64": to_f64(&self.tv_symmetrized),
            "conditionings": entries,
        })
    }

    /// One row per conditioning.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,a_rho,gamma,escape_mass,parity_even_prob,parity_branch,exception_set\n");
        for e in &self.report.entries {
            let rho: Vec<String> = e.rho.iter().map(|(i, v)| format!("{i}={}", u8::from(*v))).collect();
            let t: Vec<String> = e.exception_set.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rho.join(" "),
                e.a_rho,
                format_rational(&e.gamma),
                format_rational(&e.escape_mass),
                format_rational(&e.parity_even_prob),
                e.parity_branch,
                t.join(" ")
            ));
        }
        out
    }
}
