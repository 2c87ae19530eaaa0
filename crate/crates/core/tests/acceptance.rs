//! Acceptance suite. Prints one line per criterion and fails if any criterion
//! fails outside the documented known deviations, or if a known deviation
//! spreads beyond its documented range.

use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use localsample::analyze::{classify, ClassifyParams};
use localsample::decompose::{moment_profile, vandermonde_decompose};
use localsample::dist::{
    kolmogorov, mod_shift_tv, output_distribution, tv, ExactDistribution, WeightDistribution,
};
use localsample::exact::{binomial, dyadic, rat, Rational};
use localsample::experiments::{sweep, sweep_csv, verify_and_example, SweepConfig};
use localsample::learner::{learn, LearnSource, SampleBatch};
use localsample::localfn::LocalFunction;
use localsample::mixture::{bias_levels, MixtureSpec};
use localsample::samplers::{
    build_biased, build_evens, build_mixture, build_odds, BranchSpec, F2Polynomial, SamplerBlueprint,
};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// A criterion whose statement is false on part of its range. `holds_elsewhere`
/// is true when every failure falls inside the documented part.
struct Known {
    id: u32,
    holds_elsewhere: bool,
    note: &'static str,
}

fn random_blueprint(rng: &mut ChaCha8Rng, n: usize, d: u32, c: u32) -> SamplerBlueprint {
    let levels = bias_levels(d);
    let branches = (0..1usize << c)
        .map(|_| {
            if rng.gen_bool(0.5) {
                BranchSpec::Bias(levels[rng.gen_range(0..levels.len())])
            } else {
                let vars = rng.gen_range(1..=4usize);
                let count = rng.gen_range(0..=4usize);
                let monomials = (0..count)
                    .map(|_| {
                        let deg = rng.gen_range(0..=(d as usize).min(vars));
                        let mut mono: Vec<usize> = (0..vars).collect();
                        for i in 0..deg {
                            let j = rng.gen_range(i..vars);
                            mono.swap(i, j);
                        }
                        mono.truncate(deg);
                        mono
                    })
                    .collect();
                BranchSpec::Poly(F2Polynomial::new(vars, monomials).expect("valid monomials"))
            }
        })
        .collect();
    SamplerBlueprint {
        n,
        d,
        selector_bits: c,
        branches,
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> ExactDistribution {
    let sparse = rng.gen_bool(0.3);
    let mut counts: Vec<BigUint> = (0..1usize << n)
        .map(|_| {
            if sparse && rng.gen_bool(0.7) {
                BigUint::zero()
            } else {
                BigUint::from(rng.gen_range(0..16u32))
            }
        })
        .collect();
    if counts.iter().all(Zero::is_zero) {
        let i = rng.gen_range(0..counts.len());
        counts[i] = BigUint::one();
    }
    let denom: BigUint = counts.iter().sum();
    ExactDistribution::new(n, denom, counts).expect("normalized by construction")
}

fn sampler_exactness() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 2..=12usize {
        let mut cases: Vec<(String, LocalFunction, ExactDistribution)> = vec![
            ("evens".into(), build_evens(n).unwrap(), ExactDistribution::evens(n).unwrap()),
            ("odds".into(), build_odds(n).unwrap(), ExactDistribution::odds(n).unwrap()),
        ];
        for d in 1..=3u32 {
            for a in 0..=1u64 << d {
                let target = ExactDistribution::biased_product(n, &dyadic(a, d as usize)).unwrap();
                cases.push((format!("biased a={a} d={d}"), build_biased(n, a, d).unwrap(), target));
            }
        }
        for _ in 0..2 {
            let d = rng.gen_range(1..=3u32);
            let bp = random_blueprint(&mut rng, n, d, 1);
            let target = bp.induced_spec().unwrap().string_distribution(n).unwrap();
            cases.push((format!("mixture d={d}"), build_mixture(&bp).unwrap(), target));
        }
        for (label, f, target) in cases {
            checked += 1;
            let ok = f.validate().is_ok() && tv(&output_distribution(&f).unwrap(), &target).unwrap().is_zero();
            if !ok {
                failures.push(format!("n={n} {label}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "sampler exactness",
        pass: failures.is_empty() && secs < 10.0,
        detail: format!("{checked} builders, tv = 0 exactly for all but {:?}, {secs:.2} s (limit 10 s)", failures),
    }
}

fn and_example() -> (Outcome, Known) {
    let mut failed = Vec::new();
    let mut undecided = Vec::new();
    for n in 2..=12 {
        let c = verify_and_example(n).unwrap();
        let identities = c.sampler_matches && c.mass_law && c.full_parity;
        match c.decomposition {
            Some(ok) if ok && identities => {}
            None if identities => undecided.push(n),
            _ => failed.push(n),
        }
    }
    let pass = failed.is_empty() && undecided.is_empty();
    // Below n = 4 the family at d = 2 has more members than there are moments;
    // at n = 2 the target is even a convex mixture (1/6 U_0 + 2/3 U_1/4 + 1/6 evens).
    let documented = undecided.iter().all(|&n| n < 4);
    (
        Outcome {
            id: 2,
            name: "AND example",
            pass,
            detail: format!(
                "sampler, weight law and full parity moment exact at n = 2..12; decomposition with c_o = -2^-(n+1) and not-representable verdict at n = 4..12; failed {failed:?}; decomposition undefined at n = {undecided:?}"
            ),
        },
        Known {
            id: 2,
            holds_elsewhere: failed.is_empty() && documented,
            note: "decomposition needs n >= 4 at d = 2, and at n = 2 the target is a convex mixture",
        },
    )
}

fn decomposition_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for i in 0..100u32 {
        let d = i % 4;
        let c = rng.gen_range(0..=6u32);
        let spec = MixtureSpec::random(d, c, &mut rng);
        let p = spec.string_distribution(16).unwrap();
        let back = vandermonde_decompose(&moment_profile(&p).unwrap(), d).unwrap();
        if &back != spec.signed() {
            bad += 1;
        }
    }
    Outcome {
        id: 3,
        name: "decomposition round trip",
        pass: bad == 0,
        detail: format!("100 random specs (d <= 3, C <= 6, n = 16), {bad} mismatches"),
    }
}

fn classification_recovery() -> (Outcome, Known) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params_a = 2.0;
    let mut bad = Vec::new();
    let mut in_regime = 0;
    for i in 0..25 {
        let d = rng.gen_range(0..=3u32);
        let c = rng.gen_range(0..=2u32);
        let n = rng.gen_range(2..=10usize);
        let bp = random_blueprint(&mut rng, n, d, c);
        let f = build_mixture(&bp).unwrap();
        let r = classify(&f, &ClassifyParams::new(d)).unwrap();
        // ring inputs of a parity branch have degree 2, so they count as
        // high-degree whenever 2 >= n / A
        let ring_conditioned = n as f64 <= 2.0 * params_a && bp.branches.iter().any(|b| matches!(b, BranchSpec::Poly(_)));
        if ring_conditioned {
            in_regime += 1;
        }
        if r.spec.signed() != bp.induced_spec().unwrap().signed() || !r.tv_strings.is_zero() {
            bad.push((i, n, ring_conditioned));
        }
    }
    let documented = bad.iter().all(|b| b.2);
    (
        Outcome {
            id: 4,
            name: "classification recovery",
            pass: bad.is_empty(),
            detail: format!(
                "25 random blueprints (C <= 2, d <= 3, n = 2..10), {in_regime} with a parity branch at n <= 2A; failing (trial, n, ring conditioned) {bad:?}"
            ),
        },
        Known {
            id: 4,
            holds_elsewhere: documented,
            note: "at n <= 2A the degree-2 ring inputs of a parity branch are high-degree and get conditioned away",
        },
    )
}

fn kwise_uniformity() -> Outcome {
    let mut subsets = 0usize;
    let mut bad = 0usize;
    for n in 2..=10usize {
        let p = output_distribution(&build_evens(n).unwrap()).unwrap();
        for mask in 0..(1usize << n) - 1 {
            let coords: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let marg = p.marginal(&coords).unwrap();
            subsets += 1;
            if marg.probs() != ExactDistribution::uniform(coords.len()).probs() {
                bad += 1;
            }
        }
    }
    Outcome {
        id: 5,
        name: "k-wise uniformity",
        pass: bad == 0,
        detail: format!("{subsets} proper coordinate subsets for n = 2..10, {bad} non-uniform marginals"),
    }
}

fn distance_inequalities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let two = rat(2, 1);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8usize);
        let p = random_distribution(&mut rng, n);
        let q = random_distribution(&mut rng, n);
        let d_pq = tv(&p, &q).unwrap();
        if p.weight_distribution().tv(&q.weight_distribution()).unwrap() > d_pq {
            violations += 1;
        }
        let coords: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        if tv(&p.marginal(&coords).unwrap(), &q.marginal(&coords).unwrap()).unwrap() > d_pq {
            violations += 1;
        }
        let q_sym = q.symmetrize();
        if tv(&p, &p.symmetrize()).unwrap() > &two * tv(&p, &q_sym).unwrap() {
            violations += 1;
        }
    }
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8usize);
        let p = random_distribution(&mut rng, n);
        let q = random_distribution(&mut rng, n);
        let r = random_distribution(&mut rng, n);
        let (pq, qp, qr, pr) = (tv(&p, &q).unwrap(), tv(&q, &p).unwrap(), tv(&q, &r).unwrap(), tv(&p, &r).unwrap());
        let identity = tv(&p, &p).unwrap().is_zero() && (pq.is_zero() == (p.probs() == q.probs()));
        if pq != qp || !identity || pr > &pq + &qr || pq < Rational::zero() || pq > Rational::one() {
            violations += 1;
        }
    }
    Outcome {
        id: 6,
        name: "distance inequalities",
        pass: violations == 0,
        detail: format!("1000 pairs and 1000 triples with n <= 8, {violations} violations"),
    }
}

fn mixture_lower_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut instances = 0;
    let mut violations = 0;
    let n = 6;
    let uniform = ExactDistribution::uniform(n);
    let tilted = ExactDistribution::biased_product(n, &rat(1, 8)).unwrap();
    for t in 1..=8usize {
        for trial in 0..20 {
            let q = if trial % 2 == 0 { &uniform } else { &tilted };
            let parts: Vec<ExactDistribution> = (0..t)
                .map(|i| match trial % 4 {
                    // point masses on high-weight strings
                    0 | 1 => ExactDistribution::point(n, (1 << n) - 1 - i).unwrap(),
                    // products biased away from q
                    2 => ExactDistribution::biased_product(n, &dyadic(7 - (i as u64 % 2), 3)).unwrap(),
                    _ => {
                        let mut r = random_distribution(&mut rng, n);
                        while tv(&r, q).unwrap() < rat(1, 2) {
                            r = random_distribution(&mut rng, n);
                        }
                        r
                    }
                })
                .collect();
            let eps = parts
                .iter()
                .map(|p| Rational::one() - tv(p, q).unwrap())
                .max()
                .expect("t >= 1");
            let share = rat(1, t as i64);
            let weighted: Vec<(Rational, &ExactDistribution)> = parts.iter().map(|p| (share.clone(), p)).collect();
            let mix = ExactDistribution::mixture(&weighted).unwrap();
            instances += 1;
            if tv(&mix, q).unwrap() < Rational::one() - rat(t as i64, 1) * eps {
                violations += 1;
            }
        }
    }
    Outcome {
        id: 7,
        name: "mixture lower bound",
        pass: violations == 0,
        detail: format!("{instances} instances with t = 1..8, {violations} violations of 1 - t*eps"),
    }
}

fn mod_shift() -> (Outcome, Known) {
    let mut bound_violations = Vec::new();
    let mut zero_mismatch = Vec::new();
    let half = rat(1, 2);
    for t in 1..=8usize {
        for q in 2..=t + 1 {
            for j in 1..=7u64 {
                let gamma = dyadic(j, 3);
                let m = mod_shift_tv(t, &gamma, q).unwrap();
                let exact = localsample::exact::to_f64(&m.exact_tv);
                if exact < m.lower_bound * (1.0 - 1e-12) {
                    bound_violations.push((t, q, j));
                }
                if m.exact_tv.is_zero() != (q == 2 && gamma == half) {
                    zero_mismatch.push((t, q, j));
                }
            }
        }
    }
    let pass = bound_violations.is_empty() && zero_mismatch.is_empty();
    let documented = zero_mismatch == vec![(1, 2, 4)];
    (
        Outcome {
            id: 8,
            name: "modular shift bound",
            pass,
            detail: format!(
                "t <= 8, 2 <= q <= t+1, gamma = j/8; bound violations {bound_violations:?}; zero-iff mismatches (t, q, 8*gamma) {zero_mismatch:?}"
            ),
        },
        Known {
            id: 8,
            holds_elsewhere: bound_violations.is_empty() && (zero_mismatch.is_empty() || documented),
            note: "at t = 1 the shifted variable is empty, so tv = 1 even at (q, gamma) = (2, 1/2)",
        },
    )
}

fn binomial_facts() -> Outcome {
    let mut violations = 0;
    let mut checked = 0usize;
    for n in 4..=256usize {
        let eight_n = BigUint::from(8u32).pow(n as u32);
        for j in 1..=7u32 {
            // Pr[Bin(n, j/8) = w] = mass[w] / 8^n
            let mass: Vec<BigInt> = (0..=n)
                .map(|w| {
                    BigInt::from(binomial(n, w) * BigUint::from(j).pow(w as u32) * BigUint::from(8 - j).pow((n - w) as u32))
                })
                .collect();
            // gamma (1 - gamma) n = j (8 - j) n / 64
            let var = BigInt::from(j * (8 - j)) * BigInt::from(n);
            let scale = BigInt::from(eight_n.clone());
            let max = mass.iter().max().expect("n >= 4");
            // max^2 / 8^{2n} <= 64 / var
            if max * max * &var > &scale * &scale * 64 {
                violations += 1;
            }
            // |mass[a] - mass[a+1]| / 8^n <= 4 * 64 / var; adjacent gaps bound all gaps
            for a in 0..n {
                checked += 1;
                if (&mass[a] - &mass[a + 1]).abs() * &var > &scale * 256 {
                    violations += 1;
                }
            }
        }
    }
    Outcome {
        id: 9,
        name: "binomial facts",
        pass: violations == 0,
        detail: format!("n = 4..256, gamma = j/8: point-mass and {checked} adjacent-gap checks, {violations} violations"),
    }
}

fn kolmogorov_sanity() -> Outcome {
    let mut worst = 0.0f64;
    let mut violations = Vec::new();
    let mut disagreements = 0;
    for n in 8..=64usize {
        let evens = WeightDistribution::parity_class(n, false).unwrap();
        let bin = WeightDistribution::binomial(n, &rat(1, 2)).unwrap();
        let d = kolmogorov(&evens, &bin).unwrap();
        // independent tail table in units of 2^-n
        let mut tail_e = BigInt::zero();
        let mut tail_b = BigInt::zero();
        let mut best = BigInt::zero();
        for w in (0..=n).rev() {
            let c = BigInt::from(binomial(n, w));
            tail_b += &c;
            if w % 2 == 0 {
                tail_e += &c * 2;
            }
            best = best.max((&tail_e - &tail_b).abs());
        }
        if BigRational::new(best.clone(), BigInt::from(BigUint::one() << n)) != d {
            disagreements += 1;
        }
        let scale = BigInt::from(BigUint::one() << n);
        if &best * &best * BigInt::from(n) > &scale * &scale {
            violations.push(n);
        }
        worst = worst.max(localsample::exact::to_f64(&d) * (n as f64).sqrt());
    }
    Outcome {
        id: 10,
        name: "Kolmogorov sanity",
        pass: violations.is_empty() && disagreements == 0,
        detail: format!(
            "n = 8..64, max D*sqrt(n) = {worst:.4}, violations {violations:?}, {disagreements} disagreements with tail-table oracle"
        ),
    }
}

fn learner() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d, eps) = (16usize, 2u32, 0.1);
    let mut hits = 0;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let truth = MixtureSpec::random(d, 3, &mut rng);
        let f = build_mixture(&SamplerBlueprint::from_spec(n, &truth).unwrap()).unwrap();
        let out = learn(LearnSource::Function(&f), d, eps, trial, 10.0).unwrap();
        assert_eq!(out.samples_used, 1000);
        let dist = out
            .spec
            .weight_distribution(n)
            .unwrap()
            .tv(&truth.weight_distribution(n).unwrap())
            .unwrap();
        let dist = localsample::exact::to_f64(&dist);
        worst = worst.max(dist);
        if dist <= 4.0 * eps {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 11,
        name: "learner",
        pass: hits >= 45 && secs < 60.0,
        detail: format!("{hits}/50 trials within tv 0.4 (need 45), worst tv {worst:.4}, {secs:.2} s (limit 60 s)"),
    }
}

fn determinism() -> Outcome {
    let mut diffs = Vec::new();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let f = LocalFunction::random(8, 14, 3, 21).unwrap();
            let cfg = SweepConfig {
                n: 6,
                m: 10,
                d: 3,
                count: 8,
                seed: 5,
                params: ClassifyParams::new(2),
            };
            let g = build_mixture(&SamplerBlueprint::from_spec(12, &MixtureSpec::random(2, 2, &mut ChaCha8Rng::seed_from_u64(2))).unwrap()).unwrap();
            let batch = SampleBatch::from_function(&g, 3000, 8, "check").unwrap();
            let mut text = Vec::new();
            batch.write_text(&mut text).unwrap();
            vec![
                ("random function", f.to_json()),
                ("output distribution", output_distribution(&f).unwrap().to_json().to_string()),
                ("classify", classify(&f, &ClassifyParams::new(2)).unwrap().to_json().to_string()),
                ("sweep", sweep_csv(&cfg, &sweep(&cfg).unwrap())),
                ("samples", String::from_utf8(text).unwrap()),
                ("learn", learn(LearnSource::Function(&g), 2, 0.1, 3, 10.0).unwrap().to_json().to_string()),
            ]
        })
    };
    let reference = run(1);
    for threads in [1, 2, 4, 8] {
        for ((label, a), (_, b)) in reference.iter().zip(run(threads)) {
            if *a != b {
                diffs.push(format!("{label} at {threads} threads"));
            }
        }
    }
    Outcome {
        id: 12,
        name: "determinism",
        pass: diffs.is_empty(),
        detail: format!("6 seeded pipelines rerun under 1, 1, 2, 4, 8 threads, differences {diffs:?}"),
    }
}

#[test]
fn acceptance() {
    let (c2, k2) = and_example();
    let (c4, k4) = classification_recovery();
    let (c8, k8) = mod_shift();
    let known = [k2, k4, k8];
    let outcomes = vec![
        sampler_exactness(),
        c2,
        decomposition_round_trip(),
        c4,
        kwise_uniformity(),
        distance_inequalities(),
        mixture_lower_bound(),
        c8,
        binomial_facts(),
        kolmogorov_sanity(),
        learner(),
        determinism(),
    ];
    let mut unexpected = Vec::new();
    for o in &outcomes {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} [{verdict}] {}: {}", o.id, o.name, o.detail);
        if !o.pass {
            match known.iter().find(|k| k.id == o.id) {
                Some(k) if k.holds_elsewhere => println!("             known deviation: {}", k.note),
                _ => unexpected.push(o.id),
            }
        }
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
