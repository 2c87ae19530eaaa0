//! Local functions that sample the canonical family exactly.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::dist::ExactDistribution;
use crate::error::{Error, Result};
use crate::exact::{dyadic, pow2, Rational};
use crate::localfn::{LocalFunction, OutputGate};
use crate::mixture::{bias_levels, Component, MixtureSpec, SignedMixtureSpec};

/// Enumeration cap (in variables) for exact polynomial probabilities.
const POLY_ENUM_CAP: usize = 26;

/// Polynomial over F2 as a set of monomials. The empty monomial is the
/// constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct F2Polynomial {
    vars: usize,
    monomials: BTreeSet<Vec<usize>>,
}

impl F2Polynomial {
    pub fn zero(vars: usize) -> Self {
        F2Polynomial {
            vars,
            monomials: BTreeSet::new(),
        }
    }

    pub fn one(vars: usize) -> Self {
        let mut p = Self::zero(vars);
        p.monomials.insert(Vec::new());
        p
    }

    /// Repeated monomials cancel in pairs.
    pub fn new(vars: usize, monomials: Vec<Vec<usize>>) -> Result<Self> {
        let mut p = Self::zero(vars);
        for mut mono in monomials {
            mono.sort_unstable();
            if mono.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Parameter(format!("monomial {mono:?} repeats a variable")));
            }
            if let Some(&i) = mono.iter().find(|&&i| i >= vars) {
                return Err(Error::Parameter(format!("variable {i} out of range for {vars} variables")));
            }
            p.toggle(mono);
        }
        Ok(p)
    }

    /// Adds a (sorted, distinct) monomial modulo 2.
    pub fn toggle(&mut self, mono: Vec<usize>) {
        if !self.monomials.remove(&mono) {
            self.monomials.insert(mono);
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn monomials(&self) -> &BTreeSet<Vec<usize>> {
        &self.monomials
    }

    pub fn is_zero(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.monomials.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[bool]) -> bool {
        self.monomials
            .iter()
            .filter(|m| m.iter().all(|&i| x[i]))
            .count()
            % 2
            == 1
    }

    /// Algebraic normal form of a truth table over `inputs` (Möbius transform).
    pub fn from_table(vars: usize, inputs: &[usize], table: &[bool]) -> Self {
        let mut coeffs = table.to_vec();
        let k = inputs.len();
        for b in 0..k {
            let bit = 1usize << b;
            for idx in 0..coeffs.len() {
                if idx & bit != 0 {
                    coeffs[idx] ^= coeffs[idx ^ bit];
                }
            }
        }
        let mut p = Self::zero(vars);
        for (mask, &c) in coeffs.iter().enumerate() {
            if c {
                let mono = (0..k).filter(|&b| (mask >> b) & 1 == 1).map(|b| inputs[b]).collect();
                p.toggle(mono);
            }
        }
        p
    }

    /// `Pr[p(x) = 0]` for uniform `x`, exact.
    ///
    /// Monomials are grouped into variable-disjoint blocks; the block parities
    /// are independent, so `E[(-1)^p]` is the product of block biases.
    pub fn prob_zero(&self) -> Result<Rational> {
        let mut bias = Rational::one();
        for (block, vars) in self.blocks() {
            if vars.len() > POLY_ENUM_CAP {
                return Err(Error::Resource(format!(
                    "polynomial block with {} variables exceeds 2^{POLY_ENUM_CAP}",
                    vars.len()
                )));
            }
            let local: Vec<u64> = block
                .iter()
                .map(|m| {
                    m.iter()
                        .fold(0u64, |acc, i| acc | (1u64 << vars.binary_search(i).expect("var in block")))
                })
                .collect();
            let mut zeros: i64 = 0;
            for x in 0..1u64 << vars.len() {
                let parity = local.iter().filter(|&&mask| x & mask == mask).count() % 2;
                zeros += if parity == 0 { 1 } else { -1 };
            }
            bias *= BigRational::new(BigInt::from(zeros), BigInt::from(pow2(vars.len())));
        }
        Ok((Rational::one() + bias) / BigRational::from_integer(2.into()))
    }

    /// Monomials partitioned by shared variables, with each block's sorted variables.
    fn blocks(&self) -> Vec<(Vec<&Vec<usize>>, Vec<usize>)> {
        let monos: Vec<&Vec<usize>> = self.monomials.iter().collect();
        let mut parent: Vec<usize> = (0..monos.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut owner = std::collections::HashMap::new();
        for (k, m) in monos.iter().enumerate() {
            for &v in m.iter() {
                if let Some(&o) = owner.get(&v) {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, o));
                    parent[a.max(b)] = a.min(b);
                } else {
                    owner.insert(v, k);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, (Vec<&Vec<usize>>, Vec<usize>)> = Default::default();
        for (k, m) in monos.iter().enumerate() {
            let r = find(&mut parent, k);
            let e = groups.entry(r).or_default();
            e.0.push(m);
            e.1.extend(m.iter().copied());
        }
        groups
            .into_values()
            .map(|(ms, mut vs)| {
                vs.sort_unstable();
                vs.dedup();
                (ms, vs)
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({"vars": self.vars, "monomials": self.monomials.iter().collect::<Vec<_>>()})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let vars = v
            .get("vars")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Format("polynomial needs vars".into()))? as usize;
        let monomials: Vec<Vec<usize>> = serde_json::from_value(
            v.get("monomials").cloned().unwrap_or_else(|| json!([])),
        )?;
        Self::new(vars, monomials)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BranchSpec {
    Bias(u64),
    Poly(F2Polynomial),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerBlueprint {
    pub n: usize,
    pub d: u32,
    /// Selector bit count `C`; there are `2^C` branches.
    pub selector_bits: u32,
    pub branches: Vec<BranchSpec>,
}

impl SamplerBlueprint {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Parameter("mixture samplers need n >= 2".into()));
        }
        if self.branches.len() as u64 != 1u64 << self.selector_bits {
            return Err(Error::Parameter(format!(
                "{} branches for C = {}; expected {}",
                self.branches.len(),
                self.selector_bits,
                1u64 << self.selector_bits
            )));
        }
        let levels = bias_levels(self.d);
        for (i, b) in self.branches.iter().enumerate() {
            match b {
                BranchSpec::Bias(a) if !levels.contains(a) => {
                    return Err(Error::Parameter(format!("branch {i}: bias level {a} not admissible for d = {}", self.d)));
                }
                BranchSpec::Poly(p) if p.degree() > self.d as usize => {
                    return Err(Error::Parameter(format!("branch {i}: degree {} exceeds d = {}", p.degree(), self.d)));
                }
                BranchSpec::Poly(p) if p.monomials().len() > 8 * self.n => {
                    return Err(Error::Parameter(format!("branch {i}: more than 8n monomials")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// The mixture this blueprint samples: each branch carries weight `2^-C`.
    pub fn induced_spec(&self) -> Result<MixtureSpec> {
        self.validate()?;
        let share = dyadic(1, self.selector_bits as usize);
        let mut spec = SignedMixtureSpec::pure(self.d, Component::Evens)?;
        spec.c_e = Rational::zero();
        for b in &self.branches {
            match b {
                BranchSpec::Bias(a) => {
                    *spec.c_a.get_mut(a).expect("validated level") += &share;
                }
                BranchSpec::Poly(p) => {
                    let zero = p.prob_zero()?;
                    spec.c_o += &share * (Rational::one() - &zero);
                    spec.c_e += &share * zero;
                }
            }
        }
        MixtureSpec::new(spec, Some(self.selector_bits))
    }

    /// Blueprint whose branches realize `spec` with constant polynomials for
    /// evens/odds. Requires every coefficient to be a multiple of `2^-C`.
    pub fn from_spec(n: usize, spec: &MixtureSpec) -> Result<Self> {
        let c = spec
            .granularity()
            .ok_or_else(|| Error::Parameter("spec has no granularity".into()))?;
        let scale = BigRational::from_integer(BigInt::from(pow2(c as usize)));
        let mut branches = Vec::new();
        for (comp, coef) in spec.signed().coefficients() {
            let units = &coef * &scale;
            if !units.is_integer() {
                return Err(Error::Parameter(format!("coefficient of {comp} is not a multiple of 2^-{c}")));
            }
            let units: u64 = num_traits::ToPrimitive::to_u64(&units.to_integer()).unwrap_or(0);
            let branch = match comp {
                Component::Bias(a) => BranchSpec::Bias(a),
                Component::Evens => BranchSpec::Poly(F2Polynomial::zero(0)),
                Component::Odds => BranchSpec::Poly(F2Polynomial::one(0)),
            };
            branches.extend(std::iter::repeat(branch).take(units as usize));
        }
        let bp = SamplerBlueprint {
            n,
            d: spec.d(),
            selector_bits: c,
            branches,
        };
        bp.validate()?;
        Ok(bp)
    }

    pub fn to_json(&self) -> Value {
        let branches: Vec<Value> = self
            .branches
            .iter()
            .map(|b| match b {
                BranchSpec::Bias(a) => json!({"bias": a}),
                BranchSpec::Poly(p) => json!({"poly": p.to_json()}),
            })
            .collect();
        json!({"n": self.n, "d": self.d, "C": self.selector_bits, "branches": branches})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let get = |k: &str| {
            v.get(k)
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Format(format!("blueprint needs integer {k:?}")))
        };
        let branches = v
            .get("branches")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("blueprint needs branches".into()))?
            .iter()
            .map(|b| {
                if let Some(a) = b.get("bias").and_then(Value::as_u64) {
                    Ok(BranchSpec::Bias(a))
                } else if let Some(p) = b.get("poly") {
                    Ok(BranchSpec::Poly(F2Polynomial::from_json(p)?))
                } else {
                    Err(Error::Format(format!("unrecognized branch {b}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let bp = SamplerBlueprint {
            n: get("n")? as usize,
            d: get("d")? as u32,
            selector_bits: get("C")? as u32,
            branches,
        };
        bp.validate()?;
        Ok(bp)
    }
}

/// Telescoping parity sampler `(x0^x1, x1^x2, ..., x_{n-1}^x0)`; with
/// `odd` the first gate is negated.
fn parity_ring(n: usize, odd: bool) -> Result<LocalFunction> {
    if n < 2 {
        return Err(Error::Parameter(format!("parity samplers need n >= 2, got {n}")));
    }
    let outputs = (0..n)
        .map(|j| {
            let (a, b) = (j, (j + 1) % n);
            let flip = odd && j == 0;
            OutputGate::from_fn(vec![a.min(b), a.max(b)], |x| (x[0] ^ x[1]) ^ flip)
        })
        .collect();
    LocalFunction::new(n, n, 2, outputs)
}

pub fn build_evens(n: usize) -> Result<LocalFunction> {
    parity_ring(n, false)
}

pub fn build_odds(n: usize) -> Result<LocalFunction> {
    parity_ring(n, true)
}

/// `U_{a/2^d}^n`: output `j` reads `d` fresh bits and fires when their
/// little-endian value is below `a`.
pub fn build_biased(n: usize, a: u64, d: u32) -> Result<LocalFunction> {
    if a > 1u64 << d {
        return Err(Error::Parameter(format!("a = {a} exceeds 2^{d}")));
    }
    let d = d as usize;
    let outputs = (0..n)
        .map(|j| {
            let inputs: Vec<usize> = (j * d..(j + 1) * d).collect();
            let table = (0..1u64 << d).map(|v| v < a).collect();
            OutputGate::new(inputs, table)
        })
        .collect();
    LocalFunction::new(n, n * d, d, outputs)
}

/// Per-output view of one branch: which block inputs output `j` reads and
/// how it computes its bit from them.
enum BranchGate {
    Bias { inputs: Vec<usize>, a: u64 },
    /// `y_j` is the xor of the binned monomials (over global input ids);
    /// `z_j = w_j ^ w_{j+1}` for the evens ring.
    Poly { monomials: Vec<Vec<usize>>, ring: [usize; 2] },
}

impl BranchGate {
    fn inputs(&self) -> Vec<usize> {
        match self {
            BranchGate::Bias { inputs, .. } => inputs.clone(),
            BranchGate::Poly { monomials, ring } => {
                let mut v: Vec<usize> = monomials.iter().flatten().copied().chain(ring.iter().copied()).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    fn eval(&self, value: impl Fn(usize) -> bool) -> bool {
        match self {
            BranchGate::Bias { inputs, a } => {
                let v = inputs
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (k, &i)| acc | (u64::from(value(i)) << k));
                v < *a
            }
            BranchGate::Poly { monomials, ring } => {
                let y = monomials.iter().filter(|m| m.iter().all(|&i| value(i))).count() % 2 == 1;
                y ^ value(ring[0]) ^ value(ring[1])
            }
        }
    }
}

/// Exact sampler for a blueprint. Inputs are laid out as the `C` selector
/// bits followed by one dedicated block per branch; the resulting function's
/// `d` is the achieved locality.
pub fn build_mixture(bp: &SamplerBlueprint) -> Result<LocalFunction> {
    bp.validate()?;
    let n = bp.n;
    let c = bp.selector_bits as usize;
    let d = bp.d as usize;
    let mut next = c;
    let mut per_branch: Vec<Vec<BranchGate>> = Vec::with_capacity(bp.branches.len());
    for branch in &bp.branches {
        match branch {
            BranchSpec::Bias(a) => {
                let base = next;
                next += d * n;
                per_branch.push(
                    (0..n)
                        .map(|j| BranchGate::Bias {
                            inputs: (base + j * d..base + (j + 1) * d).collect(),
                            a: *a,
                        })
                        .collect(),
                );
            }
            BranchSpec::Poly(p) => {
                let var_base = next;
                let ring_base = next + p.vars();
                next += p.vars() + n;
                let mut bins: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
                // round-robin in lexicographic monomial order
                for (k, mono) in p.monomials().iter().enumerate() {
                    bins[k % n].push(mono.iter().map(|&i| var_base + i).collect());
                }
                per_branch.push(
                    bins.into_iter()
                        .enumerate()
                        .map(|(j, monomials)| BranchGate::Poly {
                            monomials,
                            ring: [ring_base + j, ring_base + (j + 1) % n],
                        })
                        .collect(),
                );
            }
        }
    }
    let m = next;
    let outputs: Vec<OutputGate> = (0..n)
        .map(|j| {
            let mut inputs: Vec<usize> = (0..c).collect();
            for branch in &per_branch {
                inputs.extend(branch[j].inputs());
            }
            inputs.sort_unstable();
            inputs.dedup();
            let pos = |i: usize| inputs.binary_search(&i).expect("gate reads its own inputs");
            let table = (0..1usize << inputs.len())
                .map(|idx| {
                    let bit = |i: usize| (idx >> pos(i)) & 1 == 1;
                    let sel = (0..c).fold(0usize, |acc, s| acc | (usize::from(bit(s)) << s));
                    per_branch[sel][j].eval(bit)
                })
                .collect();
            OutputGate::new(inputs, table)
        })
        .collect();
    let locality = outputs.iter().map(OutputGate::fan_in).max().unwrap_or(0);
    LocalFunction::new(n, m, locality, outputs)
}

/// 3-local sampler: `z_j = (x_j ^ x_{j+1}) & y_j` with `x` feeding the
/// evens ring and `y` uniform.
pub fn build_and_example(n: usize) -> Result<LocalFunction> {
    if n < 2 {
        return Err(Error::Parameter(format!("AND example needs n >= 2, got {n}")));
    }
    let outputs = (0..n)
        .map(|j| {
            let (a, b) = (j.min((j + 1) % n), j.max((j + 1) % n));
            OutputGate::from_fn(vec![a, b, n + j], |x| (x[0] ^ x[1]) & x[2])
        })
        .collect();
    LocalFunction::new(n, 2 * n, 3, outputs)
}

/// `U_{1/4}^n + 2^{-n-1} evens - 2^{-n-1} odds`, evaluated point-wise.
pub fn signed_example(n: usize) -> Result<ExactDistribution> {
    if n == 0 {
        return Err(Error::Parameter("signed example needs n >= 1".into()));
    }
    let product = ExactDistribution::biased_product(n, &dyadic(1, 2))?;
    let evens = ExactDistribution::evens(n)?;
    let odds = ExactDistribution::odds(n)?;
    let corr = dyadic(1, n + 1);
    let probs: Vec<Rational> = (0..1usize << n)
        .map(|x| product.prob(x) + &corr * evens.prob(x) - &corr * odds.prob(x))
        .collect();
    assert!(
        probs.iter().all(|p| *p >= Rational::zero()),
        "signed example must be nonnegative"
    );
    assert!(probs.iter().sum::<Rational>().is_one(), "signed example must be normalized");
    ExactDistribution::from_probs(n, &probs)
}
