use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use localsample::analyze::{classify, high_degree_inputs, parity_polynomial, ClassifyParams};
use localsample::decompose::{
    check_convexity, mixture_tv_f64, nearest_mixture, parity_moment, parity_moment_dense, vandermonde_decompose,
    weight_moment_profile, FitLevel,
};
use localsample::dist::{output_distribution, tv, ExactDistribution};
use localsample::exact::{dyadic, rat, to_f64, Rational};
use localsample::learner::{learn, scheffe_select, LearnSource, SampleBatch};
use localsample::localfn::{word_to_bits, LocalFunction};
use localsample::mixture::{bias_levels, components, MixtureSpec, SignedMixtureSpec};
use localsample::samplers::{
    build_biased, build_evens, build_mixture, build_odds, signed_example, BranchSpec, F2Polynomial,
    SamplerBlueprint,
};

fn dist_from_counts(n: usize, mut counts: Vec<u32>) -> ExactDistribution {
    if counts.iter().all(|&c| c == 0) {
        counts[0] = 1;
    }
    let denom: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    ExactDistribution::new(n, BigUint::from(denom), counts.into_iter().map(BigUint::from).collect())
        .expect("normalized by construction")
}

fn distribution(n: usize) -> impl Strategy<Value = ExactDistribution> {
    prop::collection::vec(prop_oneof![2 => Just(0u32), 3 => 0u32..16], 1usize << n)
        .prop_map(move |c| dist_from_counts(n, c))
}

fn pair() -> impl Strategy<Value = (ExactDistribution, ExactDistribution)> {
    (1usize..=6).prop_flat_map(|n| (distribution(n), distribution(n)))
}

fn triple() -> impl Strategy<Value = (ExactDistribution, ExactDistribution, ExactDistribution)> {
    (1usize..=5).prop_flat_map(|n| (distribution(n), distribution(n), distribution(n)))
}

/// Random local function small enough to enumerate (m <= 10).
fn small_function() -> impl Strategy<Value = LocalFunction> {
    (1usize..=6, 1usize..=3, 0usize..=7, any::<u64>())
        .prop_map(|(n, d, extra, seed)| LocalFunction::random(n, d + extra, d, seed).expect("valid parameters"))
}

fn assignment(m: usize, seed: u64) -> BTreeMap<usize, bool> {
    (0..m)
        .filter(|i| (seed >> (2 * i)) & 1 == 1)
        .map(|i| (i, (seed >> (2 * i + 1)) & 1 == 1))
        .collect()
}

fn product(p: &ExactDistribution, q: &ExactDistribution) -> ExactDistribution {
    let probs: Vec<Rational> = (0..1usize << (p.n() + q.n()))
        .map(|x| p.prob(x & ((1 << p.n()) - 1)) * q.prob(x >> p.n()))
        .collect();
    ExactDistribution::from_probs(p.n() + q.n(), &probs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restrictions_compose(f in small_function(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let r1 = assignment(f.m, s1);
        let r2: BTreeMap<usize, bool> = assignment(f.m, s2).into_iter().filter(|(i, _)| !r1.contains_key(i)).collect();
        let survivors: Vec<usize> = (0..f.m).filter(|i| !r1.contains_key(i)).collect();
        let r2_local: BTreeMap<usize, bool> = r2
            .iter()
            .map(|(i, &b)| (survivors.binary_search(i).unwrap(), b))
            .collect();
        let mut both = r1.clone();
        both.extend(r2);
        let stepwise = f.restrict(&r1).unwrap().restrict(&r2_local).unwrap();
        prop_assert_eq!(stepwise, f.restrict(&both).unwrap());
    }

    #[test]
    fn evaluate_commutes_with_restrict(f in small_function(), s in any::<u64>()) {
        let rho = assignment(f.m, s);
        let g = f.restrict(&rho).unwrap();
        for x in 0..1u64 << g.m {
            let bits = word_to_bits(x, g.m);
            let mut merged = Vec::with_capacity(f.m);
            let mut rest = bits.iter();
            for i in 0..f.m {
                merged.push(match rho.get(&i) {
                    Some(&b) => b,
                    None => *rest.next().unwrap(),
                });
            }
            prop_assert_eq!(g.evaluate(&bits).unwrap(), f.evaluate(&merged).unwrap());
        }
    }

    #[test]
    fn degrees_sum_to_fan_in(f in small_function()) {
        let fan_in: usize = f.outputs.iter().map(|g| g.fan_in()).sum();
        prop_assert_eq!(f.degree_profile().total(), fan_in);
    }

    #[test]
    fn function_json_round_trip(f in small_function()) {
        prop_assert_eq!(LocalFunction::from_json(&f.to_json()).unwrap(), f);
    }

    #[test]
    fn tv_is_a_metric((p, q, r) in triple()) {
        let pq = tv(&p, &q).unwrap();
        prop_assert_eq!(&pq, &tv(&q, &p).unwrap());
        prop_assert!(tv(&p, &p).unwrap().is_zero());
        prop_assert_eq!(pq.is_zero(), p.probs() == q.probs());
        prop_assert!(tv(&p, &r).unwrap() <= &pq + tv(&q, &r).unwrap());
        prop_assert!(pq <= Rational::one());
    }

    #[test]
    fn data_processing((p, q) in pair(), mask in any::<u64>()) {
        let d = tv(&p, &q).unwrap();
        prop_assert!(p.weight_distribution().tv(&q.weight_distribution()).unwrap() <= d);
        let coords: Vec<usize> = (0..p.n()).filter(|i| mask >> i & 1 == 1).collect();
        prop_assert!(tv(&p.marginal(&coords).unwrap(), &q.marginal(&coords).unwrap()).unwrap() <= d);
    }

    #[test]
    fn symmetrization_bound((p, q) in pair()) {
        let q = q.symmetrize();
        prop_assert!(q.is_symmetric());
        prop_assert!(tv(&p, &p.symmetrize()).unwrap() <= rat(2, 1) * tv(&p, &q).unwrap());
    }

    #[test]
    fn balanced_mixture_bound(n in 2usize..=5, parts in prop::collection::vec(any::<u64>(), 1..=8), q_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(q_seed);
        let q = ExactDistribution::biased_product(n, &dyadic(rand::Rng::gen_range(&mut rng, 0..=8u64), 3)).unwrap();
        let ps: Vec<ExactDistribution> = parts
            .iter()
            .map(|&s| ExactDistribution::point(n, (s % (1 << n)) as usize).unwrap())
            .collect();
        let eps = ps.iter().map(|p| Rational::one() - tv(p, &q).unwrap()).max().unwrap();
        let t = ps.len() as i64;
        let weighted: Vec<(Rational, &ExactDistribution)> = ps.iter().map(|p| (rat(1, t), p)).collect();
        let mix = ExactDistribution::mixture(&weighted).unwrap();
        prop_assert!(tv(&mix, &q).unwrap() >= Rational::one() - rat(t, 1) * eps);
    }

    #[test]
    fn product_bound(
        biases in prop::collection::vec((0u64..=16, 0u64..=16), 1..=10),
        mix_seed in any::<u64>(),
    ) {
        // P and W are products over all s = n coordinates; Q = (W + R) / 2
        let n = biases.len();
        let product_of = |levels: Vec<u64>| {
            let probs: Vec<Rational> = (0..1usize << n)
                .map(|x| {
                    levels.iter().enumerate().fold(Rational::one(), |acc, (i, &a)| {
                        let g = dyadic(a, 4);
                        acc * if x >> i & 1 == 1 { g } else { Rational::one() - g }
                    })
                })
                .collect();
            ExactDistribution::from_probs(n, &probs).unwrap()
        };
        let p = product_of(biases.iter().map(|b| b.0).collect());
        let w = product_of(biases.iter().map(|b| b.1).collect());
        let eps = biases.iter().map(|&(a, b)| dyadic(a.abs_diff(b), 4)).min().unwrap();
        let q = if mix_seed % 2 == 0 {
            w.clone()
        } else {
            let r = ExactDistribution::point(n, (mix_seed >> 1) as usize % (1 << n)).unwrap();
            ExactDistribution::mixture(&[(rat(1, 2), &w), (rat(1, 2), &r)]).unwrap()
        };
        let nu = (0..1usize << n)
            .filter(|&x| !q.prob(x).is_zero())
            .map(|x| w.prob(x) / q.prob(x))
            .min()
            .unwrap();
        prop_assume!(!nu.is_zero());
        let e = to_f64(&eps);
        let bound = 1.0 - 2.0 * (-e * e * n as f64 / 2.0).exp() / to_f64(&nu);
        prop_assert!(to_f64(&tv(&p, &q).unwrap()) >= bound - 1e-12);
    }

    #[test]
    fn builders_are_exact_and_local(n in 2usize..=9, d in 1u32..=3, a_seed in any::<u64>()) {
        let a = a_seed % ((1u64 << d) + 1);
        let f = build_biased(n, a, d).unwrap();
        prop_assert!(f.validate().is_ok());
        prop_assert_eq!(f.d, d as usize);
        prop_assert!(f.max_fan_in() <= f.d);
        let target = ExactDistribution::biased_product(n, &dyadic(a, d as usize)).unwrap();
        prop_assert!(tv(&output_distribution(&f).unwrap(), &target).unwrap().is_zero());
        for (g, target) in [
            (build_evens(n).unwrap(), ExactDistribution::evens(n).unwrap()),
            (build_odds(n).unwrap(), ExactDistribution::odds(n).unwrap()),
        ] {
            prop_assert!(g.validate().is_ok());
            prop_assert_eq!(g.max_fan_in(), 2);
            prop_assert!(tv(&output_distribution(&g).unwrap(), &target).unwrap().is_zero());
        }
    }

    #[test]
    fn mixture_branches_are_independent(n in 2usize..=6, level in 0usize..4, monos in prop::collection::vec(prop::collection::vec(0usize..3, 0..=2), 0..=3), sel in any::<bool>()) {
        let poly = F2Polynomial::new(3, monos.into_iter().map(|mut m| { m.sort_unstable(); m.dedup(); m }).collect()).unwrap();
        let a = bias_levels(2)[level];
        let bp = SamplerBlueprint { n, d: 2, selector_bits: 1, branches: vec![BranchSpec::Bias(a), BranchSpec::Poly(poly.clone())] };
        let f = build_mixture(&bp).unwrap();
        let branch = output_distribution(&f.restrict(&[(0, sel)].into_iter().collect()).unwrap()).unwrap();
        let target = if sel {
            let even = poly.prob_zero().unwrap();
            let (e, o) = (ExactDistribution::evens(n).unwrap(), ExactDistribution::odds(n).unwrap());
            ExactDistribution::mixture(&[(even.clone(), &e), (Rational::one() - even, &o)]).unwrap()
        } else {
            ExactDistribution::biased_product(n, &dyadic(a, 2)).unwrap()
        };
        prop_assert!(tv(&branch, &target).unwrap().is_zero());
    }

    #[test]
    fn evens_marginals_are_uniform(n in 2usize..=10, mask in any::<u64>()) {
        let mask = mask % ((1 << n) - 1);
        let coords: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let p = output_distribution(&build_evens(n).unwrap()).unwrap();
        prop_assert_eq!(p.marginal(&coords).unwrap().probs(), ExactDistribution::uniform(coords.len()).probs());
    }

    #[test]
    fn moments_multiply_over_products(p in (1usize..=4).prop_flat_map(distribution), q in (1usize..=4).prop_flat_map(distribution), s in 0usize..=8) {
        let pq = product(&p, &q);
        let s = s.min(pq.n());
        let expected = if s <= p.n() {
            parity_moment_dense(&p, s).unwrap()
        } else {
            parity_moment_dense(&p, p.n()).unwrap() * parity_moment_dense(&q, s - p.n()).unwrap()
        };
        prop_assert_eq!(parity_moment_dense(&pq, s).unwrap(), expected);
    }

    #[test]
    fn moments_are_linear_over_mixtures((p, q) in pair(), num in 0i64..=8, s in 0usize..=6) {
        let s = s.min(p.n());
        let alpha = rat(num, 8);
        let mix = ExactDistribution::mixture(&[(alpha.clone(), &p), (Rational::one() - &alpha, &q)]).unwrap();
        let expected = &alpha * parity_moment(&p, s).unwrap() + (Rational::one() - &alpha) * parity_moment(&q, s).unwrap();
        prop_assert_eq!(parity_moment(&mix, s).unwrap(), expected);
    }

    #[test]
    fn decompose_inverts_profile(d in 0u32..=3, c in 0u32..=6, seed in any::<u64>(), extra in 1usize..=8) {
        let spec = MixtureSpec::random(d, c, &mut ChaCha8Rng::seed_from_u64(seed));
        let n = bias_levels(d).len() + extra;
        let w = spec.weight_distribution(n).unwrap();
        let back = vandermonde_decompose(&weight_moment_profile(&w).unwrap(), d).unwrap();
        prop_assert_eq!(&back, spec.signed());
        prop_assert!(check_convexity(&back, &Rational::zero()).representable);
    }

    #[test]
    fn nearest_mixture_is_optimal_over_vertices(p in (4usize..=6).prop_flat_map(distribution), string_level in any::<bool>()) {
        let level = if string_level { FitLevel::String } else { FitLevel::Weight };
        let fit = nearest_mixture(&p, 2, level).unwrap();
        let total: f64 = fit.coefficients.iter().map(|c| c.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(fit.coefficients.iter().all(|c| c.1 >= -1e-12));
        let check = mixture_tv_f64(&p, 2, &fit.coefficients, level).unwrap();
        prop_assert!((check - fit.tv).abs() < 1e-9, "{} vs {}", check, fit.tv);
        for c in components(2) {
            let vertex = mixture_tv_f64(&p, 2, &[(c, 1.0)], level).unwrap();
            prop_assert!(fit.tv <= vertex + 1e-9, "{} beats fit {}", vertex, fit.tv);
        }
    }

    #[test]
    fn high_degree_set_is_small(f in small_function(), a in 1.0f64..6.0) {
        let s = high_degree_inputs(&f, a).unwrap();
        prop_assert!(s.len() as f64 <= f.d as f64 * a + 1e-9);
    }

    #[test]
    fn parity_polynomial_matches_enumeration(f in small_function()) {
        let poly = parity_polynomial(&f).unwrap();
        prop_assert!(poly.degree() <= f.d);
        let p = output_distribution(&f).unwrap();
        let even: Rational = (0..1usize << f.n).filter(|x| x.count_ones() % 2 == 0).map(|x| p.prob(x)).sum();
        prop_assert_eq!(poly.prob_zero().unwrap(), even);
    }

    #[test]
    fn classify_distances_are_consistent(f in small_function()) {
        let r = classify(&f, &ClassifyParams::new(1)).unwrap();
        prop_assert!(r.tv_weights <= r.tv_strings);
        prop_assert!(r.tv_symmetrized <= rat(2, 1) * &r.tv_strings);
        prop_assert_eq!(r.report.full_distribution().unwrap().probs(), output_distribution(&f).unwrap().probs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    // n > 2A keeps the degree-2 ring inputs of parity branches out of S
    fn classify_recovers_blueprints(n in 5usize..=7, a in 0usize..4, b in 0usize..4, use_poly in any::<bool>()) {
        let levels = bias_levels(2);
        let second = if use_poly {
            BranchSpec::Poly(F2Polynomial::new(3, vec![vec![0, 1], vec![2]]).unwrap())
        } else {
            BranchSpec::Bias(levels[b])
        };
        let bp = SamplerBlueprint { n, d: 2, selector_bits: 1, branches: vec![BranchSpec::Bias(levels[a]), second] };
        let r = classify(&build_mixture(&bp).unwrap(), &ClassifyParams::new(2)).unwrap();
        let induced = bp.induced_spec().unwrap();
        prop_assert_eq!(r.spec.signed(), induced.signed());
        prop_assert!(r.tv_strings.is_zero());
    }

    #[test]
    fn learning_is_deterministic(seed in any::<u64>()) {
        let f = build_biased(8, 1, 2).unwrap();
        let a = learn(LearnSource::Function(&f), 1, 0.2, seed, 10.0).unwrap();
        let b = learn(LearnSource::Function(&f), 1, 0.2, seed, 10.0).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(a.spec, b.spec);
    }

    #[test]
    fn scheffe_returns_the_first_minimum(counts in prop::collection::vec(0u64..50, 6), laws in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 1..=12)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let laws: Vec<Vec<f64>> = laws
            .into_iter()
            .map(|l| {
                let t: f64 = l.iter().sum::<f64>().max(1e-9);
                l.into_iter().map(|v| v / t).collect()
            })
            .collect();
        let sel = scheffe_select(&counts, &laws).unwrap();
        let min = sel.deviations.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(sel.deviations[sel.index], min);
        prop_assert!(sel.deviations[..sel.index].iter().all(|&v| v > min));
    }

    #[test]
    fn sample_text_round_trip(seed in any::<u64>(), count in 1usize..200) {
        let f = build_evens(7).unwrap();
        let batch = SampleBatch::from_function(&f, count, seed, "prop").unwrap();
        let mut buf = Vec::new();
        batch.write_text(&mut buf).unwrap();
        let back = SampleBatch::read_text(&buf[..]).unwrap();
        prop_assert_eq!(back.weight_histogram(), batch.weight_histogram());
        prop_assert_eq!(back.len(), count);
    }
}

#[test]
fn signed_example_is_never_representable() {
    for n in 4..=12 {
        let spec = vandermonde_decompose(
            &weight_moment_profile(&signed_example(n).unwrap().weight_distribution()).unwrap(),
            2,
        )
        .unwrap();
        let c = check_convexity(&spec, &Rational::zero());
        assert!(!c.representable, "n = {n}");
        assert_eq!(c.witness_value, -dyadic(1, n + 1));
    }
}

#[test]
fn convex_specs_are_representable() {
    let spec = SignedMixtureSpec::new(2, [(1, rat(1, 2))].into_iter().collect(), rat(1, 4), rat(1, 4)).unwrap();
    assert!(check_convexity(&spec, &Rational::zero()).representable);
}
