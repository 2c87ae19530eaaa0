//! Learning symmetric locally sampleable distributions from samples.
//!
//! Hypotheses are mixtures whose coefficients are multiples of `1/G`.
//! Selection is the minimum-distance (Scheffé) rule over pairwise Yatracos
//! sets. Every hypothesis is symmetric, so the sets and all statistics live on
//! Hamming weights.

use std::io::{BufRead, Read, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rayon::prelude::*;
use serde_json::Value;

use crate::decompose::family_weight_matrix;
use crate::error::{Error, Result};
use crate::localfn::{format_bits, parse_bits, LocalFunction};
use crate::lp::l1_fit_simplex;
use crate::mixture::{bias_levels, components, Component, MixtureSpec, SignedMixtureSpec};
use crate::rng::stream;

/// Default constant `K` in the sample count `ceil(K / eps^2)`.
pub const DEFAULT_SAMPLE_CONSTANT: f64 = 10.0;
/// Covers up to this size are used whole; larger ones are searched locally.
pub const FULL_COVER_LIMIT: u64 = 2000;
/// Hard cap on materialized cover size.
pub const COVER_CAP: u64 = 5_000_000;
/// Largest tournament (`H^2` comparisons) accepted by `scheffe_select`.
pub const TOURNAMENT_CAP: usize = 20_000;
/// Target size of the local neighborhood around the pilot fit.
const NEIGHBORHOOD_TARGET: u64 = 4000;
const SAMPLE_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Seeded { seed: u64, source: String },
    External,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleData {
    /// Packed strings: bit `j` is coordinate `j`.
    Strings(Vec<u64>),
    Weights(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    pub n: usize,
    pub data: SampleData,
    pub provenance: Provenance,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        match &self.data {
            SampleData::Strings(v) => v.len(),
            SampleData::Weights(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Count of samples at each weight `0..=n`.
    pub fn weight_histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.n + 1];
        match &self.data {
            SampleData::Strings(v) => v.iter().for_each(|x| h[x.count_ones() as usize] += 1),
            SampleData::Weights(v) => v.iter().for_each(|&w| h[w as usize] += 1),
        }
        h
    }

    /// `count` outputs of `f` on fresh uniform inputs. Inputs are drawn from
    /// per-chunk streams, so the batch does not depend on thread count.
    pub fn from_function(f: &LocalFunction, count: usize, seed: u64, source: &str) -> Result<Self> {
        if f.n > 64 {
            return Err(Error::Parameter(format!("sampling supports n <= 64, got {}", f.n)));
        }
        let report = f.validate();
        if let Some(v) = report.violations.first() {
            return Err(Error::Input(format!("invalid local function: {}", v.rule)));
        }
        let chunks = count.div_ceil(SAMPLE_CHUNK);
        let words: Vec<Vec<u64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream(seed, "samples", c as u64);
                let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
                let mut x = vec![false; f.m];
                (0..len)
                    .map(|_| {
                        x.iter_mut().for_each(|b| *b = rng.gen());
                        f.outputs
                            .iter()
                            .enumerate()
                            .fold(0u64, |acc, (j, g)| acc | (u64::from(g.eval(&x)) << j))
                    })
                    .collect()
            })
            .collect();
        Ok(SampleBatch {
            n: f.n,
            data: SampleData::Strings(words.concat()),
            provenance: Provenance::Seeded {
                seed,
                source: source.to_string(),
            },
        })
    }

    /// One bit string per line; blank lines are skipped.
    pub fn read_text(reader: impl BufRead) -> Result<Self> {
        let mut n = None;
        let mut words = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bits = parse_bits(line).map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            if bits.len() > 64 {
                return Err(Error::Format(format!("line {}: more than 64 bits", lineno + 1)));
            }
            match n {
                None => n = Some(bits.len()),
                Some(k) if k != bits.len() => {
                    return Err(Error::Format(format!("line {}: length {} differs from {k}", lineno + 1, bits.len())));
                }
                _ => {}
            }
            words.push(crate::localfn::bits_to_word(&bits));
        }
        let n = n.ok_or_else(|| Error::Format("sample file is empty".into()))?;
        Ok(SampleBatch {
            n,
            data: SampleData::Strings(words),
            provenance: Provenance::External,
        })
    }

    pub fn write_text(&self, mut out: impl Write) -> Result<()> {
        match &self.data {
            SampleData::Strings(v) => {
                for &x in v {
                    writeln!(out, "{}", format_bits(&crate::localfn::word_to_bits(x, self.n)))?;
                }
                Ok(())
            }
            SampleData::Weights(_) => Err(Error::Input("weight-only batch has no strings".into())),
        }
    }

    /// Binary weight list: little-endian `u16` values, `n` first.
    pub fn read_weights(mut reader: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() < 2 || bytes.len() % 2 != 0 {
            return Err(Error::Format("weight file must hold an even number of bytes, at least 2".into()));
        }
        let mut vals = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]));
        let n = vals.next().expect("length checked") as usize;
        let weights: Vec<u32> = vals.map(u32::from).collect();
        if let Some(w) = weights.iter().find(|&&w| w as usize > n) {
            return Err(Error::Format(format!("weight {w} exceeds n = {n}")));
        }
        Ok(SampleBatch {
            n,
            data: SampleData::Weights(weights),
            provenance: Provenance::External,
        })
    }

    pub fn write_weights(&self, mut out: impl Write) -> Result<()> {
        let n = u16::try_from(self.n).map_err(|_| Error::Parameter("n does not fit in u16".into()))?;
        out.write_all(&n.to_le_bytes())?;
        for (w, c) in self.weight_histogram().iter().enumerate() {
            for _ in 0..*c {
                out.write_all(&(w as u16).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Grid cover of the family: coefficient vectors `u / G` with `sum u = G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisSet {
    pub d: u32,
    pub grid: u64,
    /// Integer numerators in canonical component order, lexicographic.
    pub points: Vec<Vec<u64>>,
}

impl HypothesisSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spec(&self, i: usize) -> Result<MixtureSpec> {
        grid_spec(self.d, self.grid, &self.points[i])
    }

    /// Weight laws (f64) of every hypothesis on `n` bits.
    pub fn weight_laws(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let (_, rows) = family_weight_matrix(self.d, n)?;
        let g = self.grid as f64;
        Ok(self
            .points
            .par_iter()
            .map(|u| {
                rows.iter()
                    .map(|row| row.iter().zip(u).map(|(a, &k)| a * k as f64).sum::<f64>() / g)
                    .collect()
            })
            .collect())
    }
}

fn grid_spec(d: u32, grid: u64, u: &[u64]) -> Result<MixtureSpec> {
    let g = BigInt::from(grid);
    let coef = |k: u64| BigRational::new(BigInt::from(k), g.clone());
    let levels = bias_levels(d);
    let c_a = levels.iter().zip(u).map(|(&a, &k)| (a, coef(k))).collect();
    let kk = levels.len();
    MixtureSpec::new(SignedMixtureSpec::new(d, c_a, coef(u[kk]), coef(u[kk + 1]))?, None)
}

/// Family size `K + 2`.
fn family_size(d: u32) -> usize {
    components(d).len()
}

/// `G = ceil(2 (K + 2) / eps)`.
pub fn grid_denominator(d: u32, eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps = {eps} outside (0,1)")));
    }
    let x = 2.0 * family_size(d) as f64 / eps;
    Ok((x - 1e-9).ceil() as u64)
}

/// Number of compositions of `g` into `parts` nonnegative parts.
pub fn cover_size(g: u64, parts: usize) -> u64 {
    let n = g + parts as u64 - 1;
    let k = parts as u64 - 1;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

pub fn hypothesis_cover(n: usize, d: u32, eps: f64) -> Result<HypothesisSet> {
    let levels = bias_levels(d).len();
    if n < levels {
        return Err(Error::Parameter(format!("cover at d = {d} needs n >= {levels}")));
    }
    let grid = grid_denominator(d, eps)?;
    let parts = family_size(d);
    let size = cover_size(grid, parts);
    if size > COVER_CAP {
        return Err(Error::Resource(format!("cover has {size} members, cap is {COVER_CAP}")));
    }
    let mut points = Vec::with_capacity(size as usize);
    let mut cur = vec![0u64; parts];
    compositions(&mut cur, 0, grid, &mut |u| points.push(u.to_vec()));
    Ok(HypothesisSet { d, grid, points })
}

/// Lexicographic compositions of `left` into `cur[i..]`.
fn compositions(cur: &mut [u64], i: usize, left: u64, emit: &mut impl FnMut(&[u64])) {
    if i + 1 == cur.len() {
        cur[i] = left;
        emit(cur);
        return;
    }
    for v in 0..=left {
        cur[i] = v;
        compositions(cur, i + 1, left - v, emit);
    }
}

/// Grid points within `radius` of `center` (per coordinate), lexicographic.
fn neighborhood(center: &[u64], grid: u64, radius: u64) -> Vec<Vec<u64>> {
    fn go(center: &[u64], radius: u64, i: usize, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if i + 1 == center.len() {
            if left + radius >= center[i] && left <= center[i] + radius {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let lo = center[i].saturating_sub(radius);
        let hi = (center[i] + radius).min(left);
        for v in lo..=hi {
            cur.push(v);
            go(center, radius, i + 1, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(center, radius, 0, grid, &mut Vec::new(), &mut out);
    out
}

/// Rounds a probability vector to multiples of `1/G` by largest remainder;
/// ties go to the lower index.
pub fn round_to_grid(c: &[f64], grid: u64) -> Vec<u64> {
    let scaled: Vec<f64> = c.iter().map(|v| v.max(0.0) * grid as f64).collect();
    let mut u: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let mut short = grid.saturating_sub(u.iter().sum());
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        u[i] += 1;
        short -= 1;
    }
    // floors can overshoot only through rounding noise
    while u.iter().sum::<u64>() > grid {
        let i = (0..u.len()).rev().find(|&i| u[i] > 0).expect("positive entry");
        u[i] -= 1;
    }
    u
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    /// Max Yatracos deviation of every hypothesis.
    pub deviations: Vec<f64>,
}

/// Minimum-distance selection over weight-level Yatracos sets.
pub fn scheffe_select(histogram: &[u64], laws: &[Vec<f64>]) -> Result<Selection> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::Input("no samples".into()));
    }
    if laws.is_empty() {
        return Err(Error::Input("no hypotheses".into()));
    }
    if laws.len() > TOURNAMENT_CAP {
        return Err(Error::Resource(format!(
            "{} hypotheses exceed the tournament cap {TOURNAMENT_CAP}",
            laws.len()
        )));
    }
    if laws.iter().any(|l| l.len() != histogram.len()) {
        return Err(Error::Input("hypothesis and sample dimensions differ".into()));
    }
    let emp: Vec<f64> = histogram.iter().map(|&c| c as f64 / total as f64).collect();
    let deviations: Vec<f64> = laws
        .par_iter()
        .map(|hi| {
            let mut worst = 0.0f64;
            for hj in laws {
                let mut h_mass = 0.0;
                let mut e_mass = 0.0;
                for w in 0..hi.len() {
                    if hi[w] > hj[w] {
                        h_mass += hi[w];
                        e_mass += emp[w];
                    }
                }
                worst = worst.max((h_mass - e_mass).abs());
            }
            worst
        })
        .collect();
    let index = (0..deviations.len())
        .reduce(|best, i| if deviations[i] < deviations[best] { i } else { best })
        .expect("nonempty");
    Ok(Selection { index, deviations })
}

pub enum LearnSource<'a> {
    Function(&'a LocalFunction),
    Samples(&'a SampleBatch),
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub spec: MixtureSpec,
    pub samples_used: usize,
    pub hypotheses: HypothesisSet,
    pub selection: Selection,
    /// Whether the whole cover was searched (otherwise a pilot neighborhood).
    pub full_cover: bool,
}

impl LearnOutcome {
    /// Per-hypothesis Yatracos deviations.
    pub fn deviations_csv(&self) -> String {
        let names: Vec<String> = components(self.hypotheses.d).iter().map(Component::to_string).collect();
        let mut out = format!("index,deviation,selected,{}\n", names.join(","));
        for (i, dev) in self.selection.deviations.iter().enumerate() {
            let u: Vec<String> = self.hypotheses.points[i]
                .iter()
                .map(|k| format!("{k}/{}", self.hypotheses.grid))
                .collect();
            out.push_str(&format!("{i},{dev},{},{}\n", i == self.selection.index, u.join(",")));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut v = self.spec.to_json();
        v["samples_used"] = Value::from(self.samples_used);
        v["grid"] = Value::from(self.hypotheses.grid);
        v["hypotheses"] = Value::from(self.hypotheses.len());
        v["full_cover"] = Value::from(self.full_cover);
        v["deviation"] = Value::from(self.selection.deviations[self.selection.index]);
        v
    }
}

/// `ceil(k / eps^2)`.
pub fn sample_count(eps: f64, k: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) || !(k > 0.0) {
        return Err(Error::Parameter(format!("need eps in (0,1) and K > 0, got {eps}, {k}")));
    }
    Ok((k / (eps * eps) - 1e-9).ceil() as usize)
}

pub fn learn(source: LearnSource<'_>, d: u32, eps: f64, seed: u64, k: f64) -> Result<LearnOutcome> {
    let owned;
    let batch = match source {
        LearnSource::Samples(b) => b,
        LearnSource::Function(f) => {
            owned = SampleBatch::from_function(f, sample_count(eps, k)?, seed, "learn")?;
            &owned
        }
    };
    if batch.is_empty() {
        return Err(Error::Input("no samples".into()));
    }
    let n = batch.n;
    let levels = bias_levels(d).len();
    if n < levels {
        return Err(Error::Parameter(format!("learning at d = {d} needs n >= {levels}")));
    }
    let grid = grid_denominator(d, eps)?;
    let parts = family_size(d);
    let hist = batch.weight_histogram();
    let full_cover = cover_size(grid, parts) <= FULL_COVER_LIMIT;
    let hypotheses = if full_cover {
        hypothesis_cover(n, d, eps)?
    } else {
        let (_, rows) = family_weight_matrix(d, n)?;
        let total = batch.len() as f64;
        let targets: Vec<f64> = hist.iter().map(|&c| c as f64 / total).collect();
        let pilot = l1_fit_simplex(&rows, &targets, &vec![1.0; n + 1])?;
        let center = round_to_grid(&pilot.coefficients, grid);
        let radius = (0..=2u64)
            .rev()
            .find(|r| (2 * r + 1).saturating_pow(parts as u32 - 1) <= NEIGHBORHOOD_TARGET)
            .unwrap_or(0);
        HypothesisSet {
            d,
            grid,
            points: neighborhood(&center, grid, radius),
        }
    };
    let laws = hypotheses.weight_laws(n)?;
    let selection = scheffe_select(&hist, &laws)?;
    let spec = hypotheses.spec(selection.index)?;
    Ok(LearnOutcome {
        spec,
        samples_used: batch.len(),
        hypotheses,
        selection,
        full_cover,
    })
}
