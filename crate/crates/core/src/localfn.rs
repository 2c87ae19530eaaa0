//! d-local functions `{0,1}^m -> {0,1}^n`.
//!
//! Each output bit is an [`OutputGate`]: a sorted list of input positions and a
//! truth table over them. Truth tables are little-endian: entry `i` is the
//! gate value when `input_indices[k]` equals bit `k` of `i`.
//!
//! Bit strings are written most-natural-first: character `j` of `"1010"` is
//! coordinate `j`. When a string is packed into an integer, coordinate `j`
//! is bit `j`.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutputGate {
    pub input_indices: Vec<usize>,
    pub table: Vec<bool>,
}

impl OutputGate {
    pub fn new(input_indices: Vec<usize>, table: Vec<bool>) -> Self {
        OutputGate {
            input_indices,
            table,
        }
    }

    pub fn constant(value: bool) -> Self {
        OutputGate::new(Vec::new(), vec![value])
    }

    /// Builds a gate by tabulating `rule` over all assignments to `inputs`.
    pub fn from_fn(inputs: Vec<usize>, rule: impl Fn(&[bool]) -> bool) -> Self {
        let k = inputs.len();
        let mut assignment = vec![false; k];
        let table = (0..1usize << k)
            .map(|idx| {
                for (b, slot) in assignment.iter_mut().enumerate() {
                    *slot = (idx >> b) & 1 == 1;
                }
                rule(&assignment)
            })
            .collect();
        OutputGate::new(inputs, table)
    }

    pub fn fan_in(&self) -> usize {
        self.input_indices.len()
    }

    /// Gate value on a full input assignment.
    pub fn eval(&self, x: &[bool]) -> bool {
        let idx = self
            .input_indices
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &i)| acc | (usize::from(x[i]) << k));
        self.table[idx]
    }

    #[inline]
    pub fn eval_word(&self, x: u64) -> bool {
        let mut idx = 0usize;
        for (k, &i) in self.input_indices.iter().enumerate() {
            idx |= (((x >> i) & 1) as usize) << k;
        }
        self.table[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalFunction {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub outputs: Vec<OutputGate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationRule {
    OutputCount,
    FanInExceedsLocality,
    IndexOutOfRange,
    UnsortedOrDuplicate,
    TableLength,
}

impl fmt::Display for ViolationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationRule::OutputCount => "output count",
            ViolationRule::FanInExceedsLocality => "fan-in exceeds locality",
            ViolationRule::IndexOutOfRange => "index out of range",
            ViolationRule::UnsortedOrDuplicate => "inputs not sorted and distinct",
            ViolationRule::TableLength => "table length",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending gate, or `None` for function-level rules.
    pub gate: Option<usize>,
    pub rule: ViolationRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: ViolationRule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeProfile {
    pub degrees: Vec<usize>,
}

impl DegreeProfile {
    pub fn total(&self) -> usize {
        self.degrees.iter().sum()
    }
}

impl LocalFunction {
    /// Validating constructor.
    pub fn new(n: usize, m: usize, d: usize, outputs: Vec<OutputGate>) -> Result<Self> {
        let f = LocalFunction { n, m, d, outputs };
        let report = f.validate();
        if let Some(v) = report.violations.first() {
            return Err(Error::Input(format!(
                "invalid local function: {} (gate {:?})",
                v.rule, v.gate
            )));
        }
        Ok(f)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.outputs.len() != self.n {
            violations.push(Violation {
                gate: None,
                rule: ViolationRule::OutputCount,
            });
        }
        for (g, gate) in self.outputs.iter().enumerate() {
            let mut push = |rule| {
                violations.push(Violation {
                    gate: Some(g),
                    rule,
                })
            };
            if gate.fan_in() > self.d {
                push(ViolationRule::FanInExceedsLocality);
            }
            if gate.input_indices.iter().any(|&i| i >= self.m) {
                push(ViolationRule::IndexOutOfRange);
            }
            if gate.input_indices.windows(2).any(|w| w[0] >= w[1]) {
                push(ViolationRule::UnsortedOrDuplicate);
            }
            let expected = 1usize.checked_shl(gate.fan_in() as u32).unwrap_or(usize::MAX);
            if gate.table.len() != expected {
                push(ViolationRule::TableLength);
            }
        }
        ValidationReport { violations }
    }

    fn ensure_valid(&self) -> Result<()> {
        match self.validate().violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Input(format!(
                "invalid local function: {} (gate {:?})",
                v.rule, v.gate
            ))),
        }
    }

    pub fn max_fan_in(&self) -> usize {
        self.outputs.iter().map(OutputGate::fan_in).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[bool]) -> Result<Vec<bool>> {
        if x.len() != self.m {
            return Err(Error::Input(format!(
                "input has {} bits, function expects {}",
                x.len(),
                self.m
            )));
        }
        self.ensure_valid()?;
        Ok(self.outputs.iter().map(|g| g.eval(x)).collect())
    }

    /// Packed evaluation for `m <= 64`, `n <= 64`; bit `j` of the result is output `j`.
    pub fn eval_word(&self, x: u64) -> u64 {
        self.outputs
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, g)| acc | (u64::from(g.eval_word(x)) << j))
    }

    pub fn degree_profile(&self) -> DegreeProfile {
        let mut degrees = vec![0usize; self.m];
        for gate in &self.outputs {
            for &i in &gate.input_indices {
                if i < self.m {
                    degrees[i] += 1;
                }
            }
        }
        DegreeProfile { degrees }
    }

    /// Fixes the inputs in `assignment` and renumbers the survivors in order.
    pub fn restrict(&self, assignment: &BTreeMap<usize, bool>) -> Result<LocalFunction> {
        self.ensure_valid()?;
        if let Some((&i, _)) = assignment.iter().find(|(&i, _)| i >= self.m) {
            return Err(Error::Input(format!(
                "assignment index {i} out of range for m = {}",
                self.m
            )));
        }
        if assignment.is_empty() {
            return Ok(self.clone());
        }
        // new_index[i] = position of input i among the unfixed inputs
        let mut new_index = vec![usize::MAX; self.m];
        let mut next = 0;
        for (i, slot) in new_index.iter_mut().enumerate() {
            if !assignment.contains_key(&i) {
                *slot = next;
                next += 1;
            }
        }
        let outputs = self
            .outputs
            .iter()
            .map(|gate| restrict_gate(gate, assignment, &new_index))
            .collect();
        Ok(LocalFunction {
            n: self.n,
            m: self.m - assignment.len(),
            d: self.d,
            outputs,
        })
    }

    /// Random function with every gate reading exactly `d` distinct inputs. `d <= m`.
    pub fn random(n: usize, m: usize, d: usize, seed: u64) -> Result<LocalFunction> {
        if d > m {
            return Err(Error::Parameter(format!("locality d = {d} exceeds m = {m}")));
        }
        let mut rng = rng::stream(seed, "random_local", 0);
        let fan_in = d.min(m);
        let outputs = (0..n)
            .map(|_| {
                let mut inputs = sample(&mut rng, m, fan_in).into_vec();
                inputs.sort_unstable();
                let table = (0..1usize << fan_in).map(|_| rng.gen::<bool>()).collect();
                OutputGate::new(inputs, table)
            })
            .collect();
        Ok(LocalFunction { n, m, d, outputs })
    }
}

fn restrict_gate(
    gate: &OutputGate,
    assignment: &BTreeMap<usize, bool>,
    new_index: &[usize],
) -> OutputGate {
    let mut fixed_bits = 0usize;
    let mut free_positions = Vec::new();
    let mut free_inputs = Vec::new();
    for (k, &i) in gate.input_indices.iter().enumerate() {
        match assignment.get(&i) {
            Some(&v) => fixed_bits |= usize::from(v) << k,
            None => {
                free_positions.push(k);
                free_inputs.push(new_index[i]);
            }
        }
    }
    let table = (0..1usize << free_positions.len())
        .map(|r| {
            let idx = free_positions
                .iter()
                .enumerate()
                .fold(fixed_bits, |acc, (b, &k)| acc | (((r >> b) & 1) << k));
            gate.table[idx]
        })
        .collect();
    OutputGate::new(free_inputs, table)
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Format(format!("unexpected character {other:?} in bit string"))),
        })
        .collect()
}

pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn bits_to_word(bits: &[bool]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (j, &b)| acc | (u64::from(b) << j))
}

pub fn word_to_bits(word: u64, len: usize) -> Vec<bool> {
    (0..len).map(|j| (word >> j) & 1 == 1).collect()
}

#[derive(Serialize, Deserialize)]
struct GateFile {
    inputs: Vec<usize>,
    table: String,
}

#[derive(Serialize, Deserialize)]
struct FunctionFile {
    n: usize,
    m: usize,
    d: usize,
    outputs: Vec<GateFile>,
}

impl LocalFunction {
    pub fn to_json(&self) -> String {
        let file = FunctionFile {
            n: self.n,
            m: self.m,
            d: self.d,
            outputs: self
                .outputs
                .iter()
                .map(|g| GateFile {
                    inputs: g.input_indices.clone(),
                    table: format_bits(&g.table),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("function serializes")
    }

    /// Parses the JSON file format. The result is not validated; call
    /// [`LocalFunction::validate`] to inspect it.
    pub fn from_json(text: &str) -> Result<LocalFunction> {
        let file: FunctionFile = serde_json::from_str(text)?;
        let outputs = file
            .outputs
            .into_iter()
            .map(|g| Ok(OutputGate::new(g.inputs, parse_bits(&g.table)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalFunction {
            n: file.n,
            m: file.m,
            d: file.d,
            outputs,
        })
    }
}
