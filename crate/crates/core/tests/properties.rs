//! Property tests over randomly drawn shapes and values.

mod common;

use common::{normal_tensor, rng, sparse_tensor, unit_atoms};
use hsc::analysis::{activation_probability, cost_report, median_mad};
use hsc::checkpoint;
use hsc::conv::{spectral_step_size, EigenOptions};
use hsc::learner::{init_state, normalize_atoms, NetworkSpec};
use hsc::preprocess::{lcn_dataset, preprocess_pair, rescale, whiten, Dataset, LcnParams, PreprocessConfig, Split, WhiteningMethod};
use hsc::solver::{relative_change, soft_threshold_nonneg};
use hsc::{ConvDictionary, InferenceConfig, Mode, NetworkState, SparseMap, Tensor4};
use proptest::prelude::*;

/// `(features, channels, kh, kw, stride, extra_h, extra_w, seed)`
fn layer_shape() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize, u64)> {
    (1usize..=4, 1usize..=3, 1usize..=4, 1usize..=4, 1usize..=3, 0usize..=6, 0usize..=6, any::<u64>())
}

fn build(shape: (usize, usize, usize, usize, usize, usize, usize, u64)) -> (ConvDictionary<f64>, (usize, usize, usize), rand_chacha::ChaCha8Rng) {
    let (f, c, kh, kw, stride, eh, ew, seed) = shape;
    let mut r = rng(seed);
    let d = ConvDictionary::new(normal_tensor(&mut r, [f, c, kh, kw]), stride).unwrap();
    (d, (c, kh + eh, kw + ew), r)
}

fn small_net(n1: usize, n2: usize) -> NetworkSpec {
    let mut spec = NetworkSpec::mnist();
    spec.input = [1, 12, 12];
    spec.layers[0].n_features = n1;
    spec.layers[0].kernel = [4, 4];
    spec.layers[1].in_channels = n1;
    spec.layers[1].n_features = n2;
    spec.layers[1].kernel = [3, 3];
    spec.with_lambdas(&[0.05, 0.05])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn encode_and_decode_are_adjoint(shape in layer_shape(), batch in 1usize..=3) {
        let (d, (c, h, w), mut r) = build(shape);
        let (ho, wo) = d.code_hw((h, w)).unwrap();
        let s = normal_tensor(&mut r, [batch, c, h, w]);
        let code = normal_tensor(&mut r, [batch, d.n_features(), ho, wo]);
        let lhs = d.encode(&s).unwrap().dot(&code).unwrap();
        let rhs = s.dot(&d.decode_to(&code, (h, w)).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * s.norm() * code.norm());
    }

    #[test]
    fn decode_is_linear(shape in layer_shape(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (d, (_, h, w), mut r) = build(shape);
        let (ho, wo) = d.code_hw((h, w)).unwrap();
        let c1 = normal_tensor(&mut r, [1, d.n_features(), ho, wo]);
        let c2 = normal_tensor(&mut r, [1, d.n_features(), ho, wo]);
        let mut mix = c1.clone();
        mix.scale(a);
        mix.axpy(b, &c2).unwrap();
        let mut expect = d.decode_to(&c1, (h, w)).unwrap();
        expect.scale(a);
        expect.axpy(b, &d.decode_to(&c2, (h, w)).unwrap()).unwrap();
        let got = d.decode_to(&mix, (h, w)).unwrap();
        let scale = 1.0 + expect.norm();
        prop_assert!(got.sub(&expect).unwrap().norm() <= 1e-10 * scale);
    }

    #[test]
    fn step_size_ignores_atom_order(shape in layer_shape(), rot in 0usize..4) {
        let (d, (_, h, w), _) = build(shape);
        let n = d.n_features();
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let permuted = ConvDictionary::new(d.weights().select_batch(&order), d.stride()).unwrap();
        let opts = EigenOptions::default();
        let a = spectral_step_size(&d, (h, w), &opts).unwrap();
        let b = spectral_step_size(&permuted, (h, w), &opts).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn soft_threshold_is_shifted_relu(values in prop::collection::vec(-5.0f64..5.0, 1..40), alpha in 0.0f64..2.0) {
        let n = values.len();
        let t = Tensor4::from_vec([1, 1, 1, n], values.clone()).unwrap();
        let out = soft_threshold_nonneg(&t, alpha).unwrap();
        for (o, v) in out.data().iter().zip(&values) {
            prop_assert_eq!(*o, (v - alpha).max(0.0));
        }
        prop_assert!(soft_threshold_nonneg(&t, -alpha - 1e-3).is_err());
    }

    #[test]
    fn sparse_maps_are_nonnegative(values in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let n = values.len();
        let any_negative = values.iter().any(|v| *v < 0.0);
        let res = SparseMap::new(Tensor4::from_vec([1, 1, 1, n], values).unwrap());
        prop_assert_eq!(res.is_err(), any_negative);
    }

    #[test]
    fn inference_codes_are_nonnegative_and_bounded(seed in any::<u64>(), spc in any::<bool>(), max_iters in 1usize..60) {
        let spec = small_net(3, 4);
        let state = init_state::<f64>(&spec, seed).unwrap();
        let x = normal_tensor(&mut rng(seed ^ 1), [1, 1, 12, 12]);
        let mode = if spc { Mode::Spc } else { Mode::HiLa };
        let res = state.infer(&x, &InferenceConfig { mode, t_stab: 1e-4, max_iters }).unwrap();
        prop_assert!(res.iterations <= max_iters);
        prop_assert!(res.converged || res.iterations == max_iters);
        for g in &res.gammas {
            prop_assert!(g.data().iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn relative_change_zero_convention(values in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let n = values.len();
        let a = Tensor4::from_vec([1, 1, 1, n], values).unwrap();
        let z = Tensor4::<f64>::zeros([1, 1, 1, n]);
        prop_assert_eq!(relative_change(&z, &z), 0.0);
        prop_assert_eq!(relative_change(&a, &a), 0.0);
        if a.norm() > 0.0 {
            prop_assert_eq!(relative_change(&z, &a), f64::INFINITY);
            prop_assert!((relative_change(&a, &z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_atoms_have_unit_norm(dims in (1usize..6, 1usize..3, 1usize..5, 1usize..5), seed in any::<u64>(), zero_atom in any::<bool>()) {
        let mut w = normal_tensor(&mut rng(seed), [dims.0, dims.1, dims.2, dims.3]);
        if zero_atom {
            w.item_mut(0).iter_mut().for_each(|v| *v = 0.0);
        }
        let d = normalize_atoms(&ConvDictionary::new(w, 1).unwrap(), seed);
        prop_assert!(unit_atoms(&d, 1e-6));
    }

    // dyadic samples keep every operation exact
    #[test]
    fn median_mad_shift(samples in prop::collection::vec(-4000i32..4000, 1..30), shift in -400i32..400) {
        let xs: Vec<f64> = samples.iter().map(|&v| v as f64 / 4.0).collect();
        let c = shift as f64 / 4.0;
        let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
        let (m0, d0) = median_mad(&xs).unwrap();
        let (m1, d1) = median_mad(&shifted).unwrap();
        prop_assert_eq!(m1, m0 + c);
        prop_assert_eq!(d1, d0);
        prop_assert!(d0 >= 0.0);
    }

    #[test]
    fn checkpoint_round_trips(n1 in 1usize..5, n2 in 1usize..5, seed in any::<u64>(), epoch in any::<u64>()) {
        let mut state: NetworkState<f32> = init_state(&small_net(n1, n2), seed).unwrap();
        state.epoch = epoch;
        for (i, m) in state.momenta.iter_mut().enumerate() {
            *m = normal_tensor(&mut rng(seed ^ i as u64), m.dims()).cast();
        }
        let bytes = checkpoint::to_bytes(&state);
        let back = checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &state);
        prop_assert_eq!(checkpoint::to_bytes(&back), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn cost_report_is_additive_and_order_free(seed in any::<u64>(), spc in any::<bool>()) {
        let spec = small_net(3, 4);
        let state = init_state::<f64>(&spec, seed).unwrap();
        let mut r = rng(seed);
        let images = normal_tensor(&mut r, [5, 1, 12, 12]);
        let cfg = InferenceConfig::new(if spc { Mode::Spc } else { Mode::HiLa }, 1e-3);
        let rep = cost_report(&state, &images, &cfg).unwrap();
        let parts: f64 = rep.layers.iter().map(|l| l.quadratic + l.l1).sum();
        prop_assert!((rep.total - parts).abs() <= 1e-9 * rep.total.abs());

        let hist = activation_probability(&state, &images, &cfg).unwrap();
        let reversed = images.select_batch(&[4, 3, 2, 1, 0]);
        let hist_rev = activation_probability(&state, &reversed, &cfg).unwrap();
        for (a, b) in hist.iter().zip(&hist_rev) {
            prop_assert_eq!(&a.probabilities, &b.probabilities);
            prop_assert!(a.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
            let sorted = a.sorted();
            prop_assert!(sorted.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }

    #[test]
    fn preprocessing_applies_once(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ds = Dataset::new(sparse_tensor(&mut r, [3, 1, 10, 10], 0.3), Split::Train, "random");
        let params = LcnParams::default();
        let once = lcn_dataset(&ds, &params).unwrap();
        prop_assert!(lcn_dataset(&once, &params).is_err());
        let (white, op) = whiten(&once, &WhiteningMethod::default()).unwrap();
        prop_assert!(whiten(&white, &WhiteningMethod::default()).is_err());
        prop_assert!(op.apply(&white).is_err());
        let scaled = rescale(&white, 2.0).unwrap();
        prop_assert!(rescale(&scaled, 2.0).is_err());
        let (tr, _) = preprocess_pair(&ds, &ds, &PreprocessConfig::default()).unwrap();
        prop_assert!(preprocess_pair(&tr, &tr, &PreprocessConfig::default()).is_err());
        prop_assert_ne!(tr.provenance.fingerprint(), ds.provenance.fingerprint());
    }
}
