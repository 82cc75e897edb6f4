use dmf_core::dynamics::{
    balance_deltas, flow_step_rk4, gradient, loss, product, reduce_target, DynConfig, LayerStack, TargetSpec,
};
use dmf_core::ensembles::{balanced_init, gaussian_matrix, DetSign, InitScheme};
use dmf_core::linalg::{self, Mat};
use dmf_core::monitors::{balance_errors, record, sigma_sandwich_violation, skew_error, track_svd, UvTerms};
use dmf_core::{Complex64, Field, FieldTag, Real, SeededRng};
use proptest::prelude::*;

fn lit<T: Field>(x: f64) -> T {
    T::from_real(T::RealField::lit(x))
}

fn random_stack<T: Field>(d: usize, n: usize, scale: f64, rng: &SeededRng) -> LayerStack<T> {
    LayerStack::new(
        (0..n)
            .map(|j| gaussian_matrix::<T>(d, &mut rng.substream(j as u64)) * lit::<T>(scale))
            .collect(),
    )
    .unwrap()
}

fn total_loss<T: Field>(layers: Vec<Mat<T>>, target: &TargetSpec<T>, cfg: &DynConfig<T::RealField>) -> f64 {
    loss(&LayerStack::new(layers).unwrap(), target, cfg).unwrap().total.as_f64()
}

fn fd_max_rel_error<T: Field>(stack: &LayerStack<T>, target: &TargetSpec<T>, a: f64) -> f64 {
    let cfg = DynConfig::gd(T::RealField::lit(a), T::RealField::lit(1.0));
    let g = gradient(stack, target, &cfg).unwrap();
    let h = 1e-6;
    let dirs: Vec<T> = match T::TAG {
        FieldTag::Real => vec![T::one()],
        FieldTag::Complex => vec![T::one(), T::from_parts(T::RealField::lit(0.0), T::RealField::lit(1.0))],
    };
    let mut worst = 0.0f64;
    for j in 0..stack.n_layers() {
        for idx in 0..stack.dim() * stack.dim() {
            for (p, &dir) in dirs.iter().enumerate() {
                let mut plus = stack.layers().to_vec();
                let mut minus = stack.layers().to_vec();
                plus[j][idx] += dir * lit::<T>(h);
                minus[j][idx] -= dir * lit::<T>(h);
                let fd = (total_loss(plus, target, &cfg) - total_loss(minus, target, &cfg)) / (2.0 * h);
                let c = g[j][idx].to_complex();
                let an = if p == 0 { c.re } else { c.im }.as_f64();
                worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1.0));
            }
        }
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_on_50_instances() {
    let root = SeededRng::new(303);
    for i in 0..50u64 {
        let rng = root.substream(i);
        let d = 1 + (i as usize % 5);
        let a = [0.0, 1.0, 10.0][i as usize % 3];
        let err = if i % 2 == 0 {
            let s = random_stack::<f64>(d, 4, 0.5, &rng);
            let t = TargetSpec::new(gaussian_matrix::<f64>(d, &mut rng.substream(9))).unwrap();
            fd_max_rel_error(&s, &t, a)
        } else {
            let s = random_stack::<Complex64>(d, 4, 0.5, &rng);
            let t = TargetSpec::new(gaussian_matrix::<Complex64>(d, &mut rng.substream(9))).unwrap();
            fd_max_rel_error(&s, &t, a)
        };
        assert!(err < 1e-6, "instance {i}: d={d} a={a} err={err:e}");
    }
}

/// `Σ_j W_N⋯W_{j+1} Ẇ_j W_{j−1}⋯W_1` with `Ẇ_j = −∇_j`.
fn product_velocity<T: Field>(stack: &LayerStack<T>, grads: &[Mat<T>]) -> Mat<T> {
    let n = stack.n_layers();
    let d = stack.dim();
    let mut total = Mat::<T>::zeros(d, d);
    for j in 0..n {
        let mut term = -grads[j].clone();
        for k in 0..j {
            term = &term * stack.layer(j - k);
        }
        // `layer` is 1-indexed; after the loop `term = Ẇ_j W_{j−1}⋯W_1`.
        for k in (j + 2)..=n {
            term = stack.layer(k) * term;
        }
        total += term;
    }
    total
}

fn check_product_velocity<T: Field>(seed: u64) {
    let rng = SeededRng::new(seed);
    let stack = random_stack::<T>(4, 4, 0.7, &rng);
    let target = TargetSpec::new(gaussian_matrix::<T>(4, &mut rng.substream(9))).unwrap();
    let free = gradient(&stack, &target, &DynConfig::flow(T::RealField::lit(0.0), T::RealField::lit(1e-3))).unwrap();
    let reg = gradient(&stack, &target, &DynConfig::flow(T::RealField::lit(7.0), T::RealField::lit(1e-3))).unwrap();
    let v0 = product_velocity(&stack, &free);
    let v1 = product_velocity(&stack, &reg);
    assert!((&v0 - &v1).norm().as_f64() < 1e-10 * (1.0 + v0.norm().as_f64()));

    // explicit a-free form: Σ_j L_{j+1}L_{j+1}ᴴ (Σ − W) R_{j−1}ᴴR_{j−1}
    let n = stack.n_layers();
    let id = Mat::<T>::identity(4, 4);
    let resid = &target.matrix - product(&stack);
    let mut explicit = Mat::<T>::zeros(4, 4);
    for j in 1..=n {
        let left = ((j + 1)..=n).fold(id.clone(), |acc, k| stack.layer(k) * acc);
        let right = (1..j).fold(id.clone(), |acc, k| stack.layer(k) * acc);
        explicit += &left * left.adjoint() * &resid * right.adjoint() * &right;
    }
    assert!((&v0 - &explicit).norm().as_f64() < 1e-10 * (1.0 + v0.norm().as_f64()));
}

#[test]
fn product_velocity_is_independent_of_regularization() {
    for s in 0..10 {
        check_product_velocity::<f64>(s);
        check_product_velocity::<Complex64>(100 + s);
    }
}

fn check_dissipation<T: Field>(seed: u64) {
    let rng = SeededRng::new(seed);
    let stack = random_stack::<T>(3, 4, 0.6, &rng);
    let target = TargetSpec::new(gaussian_matrix::<T>(3, &mut rng.substream(9))).unwrap();
    let a = 1.5;
    let reg = |s: &LayerStack<T>| -> f64 { a * balance_errors(s).1.as_f64().powi(2) };
    // closed form −4 Σ_j ‖aΔ_{j,j+1}W_j − aW_jΔ_{j−1,j}‖², boundary Δ's zero
    let deltas = balance_deltas(&stack);
    let n = stack.n_layers();
    let mut rate = 0.0;
    for j in 1..=n {
        let w = stack.layer(j);
        let mut g = Mat::<T>::zeros(3, 3);
        if j < n {
            g += &deltas[j - 1] * w;
        }
        if j > 1 {
            g -= w * &deltas[j - 2];
        }
        rate -= 4.0 * (g * lit::<T>(a)).norm_squared().as_f64();
    }
    let rel = |h: f64| {
        let cfg = DynConfig::flow(T::RealField::lit(a), T::RealField::lit(h));
        let next = flow_step_rk4(&stack, &target, &cfg).unwrap();
        let measured = (reg(&next) - reg(&stack)) / h;
        (measured - rate).abs() / rate.abs()
    };
    let (e1, e2) = (rel(1e-4), rel(5e-5));
    assert!(e1 < 1e-2, "relative mismatch {e1:e}");
    // the finite-difference error is first order in h
    assert!(e2 < 0.7 * e1 || e2 < 1e-8, "{e1:e} -> {e2:e}");
}

#[test]
fn regularizer_dissipation_matches_closed_form() {
    for s in 0..5 {
        check_dissipation::<f64>(s);
        check_dissipation::<Complex64>(50 + s);
    }
}

fn trajectory_checks<T: Field>(scheme: InitScheme<T>, seed: u64, steps: u64) -> (f64, f64, f64) {
    let stack0 = balanced_init::<T>(5, 4, &scheme, &SeededRng::new(seed)).unwrap();
    let target = TargetSpec::<T>::scaled_identity(5, T::RealField::lit(1.0));
    let cfg = DynConfig::flow(T::RealField::lit(0.0), T::RealField::lit(1e-2));
    let mut stack = stack0;
    let mut prev = None;
    let (mut worst_sandwich, mut max_zero_mode, mut l_rise) = (f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    let mut last_l = f64::INFINITY;
    for k in 0..=steps {
        let (rec, track) = record(k, k as f64 * 1e-2, &stack, &target, &cfg, prev.as_ref());
        let track = track.expect("svd available");
        let terms = UvTerms {
            half_sum_sv: rec.half_sum_sv.clone().expect("reduced target"),
            skew_uv: rec.skew_uv.unwrap(),
            diff_op: rec.diff_op.unwrap(),
        };
        worst_sandwich = worst_sandwich.max(sigma_sandwich_violation(&rec.sigma_w, &terms));
        max_zero_mode = max_zero_mode.max(rec.min_half_sum_sv().unwrap());
        l_rise = l_rise.max(rec.l_ori - last_l - 1e-10 * (1.0 + last_l));
        last_l = rec.l_ori;
        prev = Some(track);
        stack = flow_step_rk4(&stack, &target, &cfg).unwrap();
    }
    (worst_sandwich, max_zero_mode, l_rise)
}

#[test]
fn sandwich_and_descent_along_balanced_flow() {
    let (w, _, rise) = trajectory_checks::<f64>(InitScheme::balanced(0.3), 4, 400);
    assert!(w <= 1e-9, "sandwich violated by {w:e}");
    assert!(rise <= 0.0, "l_ori rose by {rise:e}");
    let (w, _, rise) = trajectory_checks::<Complex64>(InitScheme::balanced(0.3), 5, 400);
    assert!(w <= 1e-9, "sandwich violated by {w:e}");
    assert!(rise <= 0.0, "l_ori rose by {rise:e}");
}

#[test]
fn zero_mode_persists_for_negative_determinant() {
    let scheme = InitScheme {
        det_sign: Some(DetSign::Minus),
        ..InitScheme::<f64>::balanced(0.3)
    };
    let (w, zero, _) = trajectory_checks::<f64>(scheme, 6, 400);
    assert!(w <= 1e-9);
    assert!(zero < 1e-8, "smallest half-sum singular value reached {zero:e}");
}

#[test]
fn skew_error_agrees_with_explicit_inverse() {
    let rng = SeededRng::new(17);
    for i in 0..20u64 {
        let r = rng.substream(i);
        let layers: Vec<Mat<f64>> = (0..4)
            .map(|j| Mat::<f64>::identity(4, 4) + gaussian_matrix::<f64>(4, &mut r.substream(j)) * 0.3)
            .collect();
        let stack = LayerStack::new(layers.clone()).unwrap();
        let inv = layers[1].clone().try_inverse().unwrap();
        let w1p = inv * layers[2].adjoint() * layers[3].adjoint();
        let direct = (&layers[0] - w1p).norm();
        assert!((skew_error(&stack).unwrap() - direct).abs() < 1e-12, "instance {i}");
    }
}

#[test]
fn reduce_target_is_idempotent_on_reduced_targets() {
    let rng = SeededRng::new(8);
    let stack = random_stack::<Complex64>(4, 4, 0.5, &rng);
    let diag = [2.0, 1.5, 0.5, 0.25];
    let sigma = linalg::real_diag::<Complex64>(&diag);
    let (t, rotated) = reduce_target(&sigma, &stack).unwrap();
    assert_eq!(t.diag_values(), diag.to_vec());
    let cfg = DynConfig::flow(1.0, 1e-3);
    let before = loss(&stack, &TargetSpec::new(sigma).unwrap(), &cfg).unwrap().total;
    let after = loss(&rotated, &t, &cfg).unwrap().total;
    assert!((before - after).abs() < 1e-12 * (1.0 + before));
}

#[test]
fn tracked_svd_recomposes_product() {
    let rng = SeededRng::new(21);
    let stack = random_stack::<Complex64>(5, 4, 0.9, &rng);
    let w = product(&stack);
    let track = track_svd(&w, 4, None).unwrap();
    assert!((track.recompose(4) - &w).norm() < 1e-10 * (1.0 + w.norm()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduction_preserves_loss_and_balance(seed in any::<u64>(), d in 1usize..6, a in 0.0f64..5.0) {
        let rng = SeededRng::new(seed);
        let stack = random_stack::<f64>(d, 4, 0.6, &rng);
        let sigma = gaussian_matrix::<f64>(d, &mut rng.substream(99));
        let cfg = DynConfig::gd(a, 0.1);
        let before = loss(&stack, &TargetSpec::new(sigma.clone()).unwrap(), &cfg).unwrap().total;
        let (t, rotated) = reduce_target(&sigma, &stack).unwrap();
        let after = loss(&rotated, &t, &cfg).unwrap().total;
        prop_assert!((before - after).abs() < 1e-10 * (1.0 + before));
        let (e0, e1) = (balance_errors(&stack).1, balance_errors(&rotated).1);
        prop_assert!((e0 - e1).abs() < 1e-12 * (1.0 + e0));
    }

    #[test]
    fn balanced_init_is_balanced(seed in any::<u64>(), d in 1usize..7, eps in 0.01f64..2.0) {
        let stack = balanced_init::<Complex64>(d, 4, &InitScheme::balanced(eps), &SeededRng::new(seed)).unwrap();
        let scale: f64 = stack.layers().iter().map(|w| w.norm_squared()).sum();
        prop_assert!(balance_errors(&stack).1 < 1e-13 * (1.0 + scale * scale));
    }
}
