use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use swlp_core::io::MatrixDoc;
use swlp_core::maps::{admissibility_curve, concatenation_check};
use swlp_core::rng::{CounterStream, DOMAIN_AUX};
use swlp_core::{
    mc_estimate, refine_brownian, sample_brownian, Coefficient, Complex64, DiscreteSpace, GeneratorRealization,
    InputSignal, LinearMap, Scalars, StochasticSystemRealization, TimeGrid,
};

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

/// `L Lᵀ + I` from a random square factor.
fn gram(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    entries(n * n).prop_map(move |v| {
        let l = DMatrix::from_vec(n, n, v);
        &l * l.transpose() + DMatrix::identity(n, n)
    })
}

fn complex_vec(n: usize) -> impl Strategy<Value = DVector<Complex64>> {
    (entries(n), entries(n)).prop_map(|(re, im)| DVector::from_fn(re.len(), |i, _| Complex64::new(re[i], im[i])))
}

fn space(label: &str, g: DMatrix<f64>) -> DiscreteSpace {
    DiscreteSpace::new(label, g, Scalars::Complex).unwrap()
}

fn system(n: usize, a: Vec<f64>, b: Vec<f64>) -> StochasticSystemRealization<f64> {
    let h = DiscreteSpace::euclidean("H", n, Scalars::Real).unwrap();
    let u = DiscreteSpace::euclidean("U", 1, Scalars::Real).unwrap();
    let m = DMatrix::from_vec(n, n, a);
    let gen = GeneratorRealization::self_adjoint(h.clone(), -(&m * m.transpose())).unwrap();
    StochasticSystemRealization::new(
        gen,
        LinearMap::new(u.clone(), h.clone(), DMatrix::from_vec(n, 1, b.clone())).unwrap(),
        LinearMap::new(h, u, DMatrix::from_vec(1, n, b)).unwrap(),
        Coefficient::zero(n),
        Coefficient::zero(n),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_product_is_hermitian_and_positive(g in gram(4), x in complex_vec(4), y in complex_vec(4)) {
        let s = space("X", g);
        let xy = s.inner(&x, &y).unwrap();
        let yx = s.inner(&y, &x).unwrap();
        prop_assert!((xy - yx.conj()).norm() <= 1e-12 * (1.0 + xy.norm()));
        let xx = s.inner(&x, &x).unwrap();
        prop_assert!(xx.re >= 0.0);
        prop_assert!(xx.im.abs() <= 1e-12 * (1.0 + xx.re));
    }

    #[test]
    fn adjoint_pairing(gd in gram(3), gc in gram(2), m in (entries(6), entries(6)), x in complex_vec(3), y in complex_vec(2)) {
        let mat = DMatrix::from_fn(2, 3, |i, j| Complex64::new(m.0[i * 3 + j], m.1[i * 3 + j]));
        let map = LinearMap::new(space("D", gd), space("C", gc), mat).unwrap();
        let adj = map.adjoint();
        let lhs = map.codomain().inner(&map.apply(&x).unwrap(), &y).unwrap();
        let rhs = map.domain().inner(&x, &adj.apply(&y).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
        let back = adj.adjoint();
        prop_assert!((back.matrix() - map.matrix()).norm() <= 1e-10 * (1.0 + map.matrix().norm()));
    }

    #[test]
    fn semigroup_law(a in entries(9), s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let sys = system(3, a, vec![1.0, 0.0, 0.0]);
        let gen = sys.generator();
        let lhs = gen.propagator(s + t).unwrap();
        let rhs = gen.propagator(s).unwrap() * gen.propagator(t).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10);
    }

    #[test]
    fn refinement_coupling_is_exact(seed in any::<u64>(), paths in 1usize..20, steps in 1usize..20, horizon in 0.01..10.0f64) {
        let coarse = sample_brownian(TimeGrid::new(horizon, steps).unwrap(), paths, seed).unwrap();
        let fine = refine_brownian(&coarse);
        let finer = refine_brownian(&fine);
        for p in 0..paths {
            for n in 0..steps {
                prop_assert_eq!(fine.increment(p, 2 * n) + fine.increment(p, 2 * n + 1), coarse.increment(p, n));
            }
            for n in 0..2 * steps {
                prop_assert_eq!(finer.increment(p, 2 * n) + finer.increment(p, 2 * n + 1), fine.increment(p, n));
            }
        }
    }

    #[test]
    fn counter_streams_are_pure(seed in any::<u64>(), index in any::<u64>()) {
        let draw = || {
            let mut s = CounterStream::new(seed, DOMAIN_AUX, index);
            (0..8).map(|_| s.uniform()).collect::<Vec<_>>()
        };
        let a = draw();
        prop_assert_eq!(&a, &draw());
        prop_assert!(a.iter().all(|u| *u > 0.0 && *u < 1.0));
    }

    #[test]
    fn paths_do_not_depend_on_ensemble_size(seed in any::<u64>(), paths in 2usize..150) {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let big = sample_brownian(g, paths, seed).unwrap();
        let small = sample_brownian(g, paths / 2, seed).unwrap();
        prop_assert_eq!(small.increments(), &big.increments()[..small.increments().len()]);
    }

    #[test]
    fn concatenation_holds_for_any_input(a in entries(4), b in entries(2), u in entries(16)) {
        let sys = system(2, a, b);
        let g = TimeGrid::new(1.0, 16).unwrap();
        let sig = InputSignal::Deterministic(u.iter().map(|v| DVector::from_element(1, *v)).collect());
        let r = concatenation_check(&sys, &g, 8, &sig).unwrap();
        prop_assert!(r.residual <= 1e-12 * (1.0 + r.input_norm));
    }

    #[test]
    fn admissibility_curve_is_monotone(a in entries(9), b in entries(3), steps in 2usize..40) {
        let sys = system(3, a, b);
        let g = TimeGrid::new(1.0, steps).unwrap();
        let nodes: Vec<usize> = (0..=steps).collect();
        let curve = admissibility_curve(&sys, &g, &nodes).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].control >= w[0].control * (1.0 - 1e-12));
            prop_assert!(w[1].observation >= w[0].observation * (1.0 - 1e-12));
        }
    }

    #[test]
    fn matrix_documents_round_trip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        let mut s = CounterStream::new(seed, DOMAIN_AUX, 0);
        let m = DMatrix::from_fn(rows, cols, |_, _| Complex64::new(s.normal() * 1e3, s.normal() * 1e-7));
        let doc = MatrixDoc::from_matrix(&m);
        let text = serde_json::to_string(&doc).unwrap();
        let back: MatrixDoc = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.to_matrix::<Complex64>().unwrap(), m);
    }

    #[test]
    fn mc_mean_is_bracketed(xs in prop::collection::vec(-1e3..1e3f64, 2..50)) {
        let m = mc_estimate(&xs).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m.mean >= lo - 1e-9 && m.mean <= hi + 1e-9);
        prop_assert!(m.sem >= 0.0);
    }
}
