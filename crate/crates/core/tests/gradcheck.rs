//! Finite-difference verification of the analytic backward passes on the
//! miniature configs, in f64.

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use outpaint_core::models::{
    build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig, Network,
};
use outpaint_core::nn::Mode;
use outpaint_core::training::{
    adversarial_loss_g, adversarial_loss_g_grad, discriminator_loss, discriminator_loss_grad,
    generator_loss, reconstruction_loss, reconstruction_loss_grad, ScheduleState,
};

const FD_STEP: f64 = 1e-3;
const REL_TOL: f64 = 1e-2;

/// Re-randomize parameters at a larger scale than the training init. The tiny
/// default init leaves pre-activations clustered near zero, where the +-h
/// perturbation crosses LeakyReLU kinks and finite differences turn into
/// noise; spreading the weights out keeps the loss locally smooth without
/// changing what the backward pass has to get right.
fn spread_params(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut() {
        if !p.trainable {
            continue;
        }
        let around_one = p.name.ends_with("gamma");
        for v in p.value.iter_mut() {
            let z: f64 = rng.gen_range(-0.5..0.5);
            *v = if around_one { 1.0 + 0.2 * z } else { 0.4 * z };
        }
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Array4<f64> {
    Array4::from_shape_fn((n, 3, size, size), |_| rng.gen_range(-0.9..0.9))
}

/// Scalar loss of the generator path: L_G = lr*L_rec + la*L_adv(D(G(m))).
fn g_loss(
    g: &mut Network<f64>,
    d: &mut Network<f64>,
    masked: &Array4<f64>,
    x: &Array4<f64>,
    sched: &ScheduleState<f64>,
) -> f64 {
    let gx = g.forward(masked.clone(), Mode::Train).unwrap();
    let scores = d.forward(gx.clone(), Mode::Train).unwrap();
    let l_rec = reconstruction_loss(x, &gx).unwrap();
    let l_adv = adversarial_loss_g(&scores);
    generator_loss(l_rec, l_adv, sched)
}

fn d_loss(d: &mut Network<f64>, real: &Array4<f64>, fake: &Array4<f64>) -> f64 {
    let rs = d.forward(real.clone(), Mode::Train).unwrap();
    let fs = d.forward(fake.clone(), Mode::Train).unwrap();
    discriminator_loss(&rs, &fs)
}

/// Sample parameter coordinates spread over every tensor, in shuffled order
/// so early stopping still covers all layers proportionally.
fn sample_coords(net: &Network<f64>, per_param: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for (pi, p) in net.params().iter().enumerate() {
        if !p.trainable {
            continue;
        }
        for _ in 0..per_param.min(p.len()) {
            coords.push((pi, rng.gen_range(0..p.len())));
        }
    }
    // Fisher-Yates with the caller's rng keeps the whole test deterministic.
    for i in (1..coords.len()).rev() {
        let j = rng.gen_range(0..=i);
        coords.swap(i, j);
    }
    coords
}

fn check_against_fd(
    analytic: &[(usize, usize, f64)],
    target: usize,
    mut eval: impl FnMut(usize, usize, f64) -> f64,
) -> (usize, usize) {
    let mut checked = 0;
    let mut ok = 0;
    for &(pi, idx, g_an) in analytic {
        if checked >= target {
            break;
        }
        let central = |e: &mut dyn FnMut(f64) -> f64, h: f64| (e(h) - e(-h)) / (2.0 * h);
        let mut e = |h: f64| eval(pi, idx, h);
        let g_fd = central(&mut e, FD_STEP);
        // Consistency probes at half and quarter step. The loss is only
        // piecewise smooth (ReLU-family kinks, L1 corners); when a kink sits
        // inside the probed interval the central difference is meaningless,
        // and the step sizes disagree. A wrong backward pass still fails:
        // the FD estimates then agree with each other but not with the
        // analytic value.
        let g_fd2 = central(&mut e, FD_STEP / 2.0);
        let g_fd4 = central(&mut e, FD_STEP / 4.0);
        let denom = g_an.abs().max(g_fd.abs());
        // Skip coordinates where both gradients vanish at float noise level.
        if denom < 1e-10 {
            continue;
        }
        let spread = (g_fd - g_fd2)
            .abs()
            .max((g_fd2 - g_fd4).abs())
            .max((g_fd - g_fd4).abs());
        if spread / g_fd.abs().max(g_fd2.abs()).max(g_fd4.abs()).max(1e-10) > REL_TOL / 4.0 {
            continue;
        }
        checked += 1;
        if (g_an - g_fd).abs() / denom <= REL_TOL {
            ok += 1;
        }
    }
    (ok, checked)
}

#[test]
fn generator_loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gcfg = GeneratorConfig::miniature();
    let dcfg = DiscriminatorConfig::miniature();
    let mut g = build_generator::<f64>(&gcfg, 11).unwrap();
    let mut d = build_discriminator::<f64>(&dcfg, 12).unwrap();
    spread_params(&mut g, 101);
    spread_params(&mut d, 102);
    let x = random_batch(&mut rng, 2, gcfg.input_size);
    let masked = random_batch(&mut rng, 2, gcfg.input_size);
    let sched = ScheduleState::with_lambda(1, 0.25);

    // Analytic gradients.
    g.zero_grad();
    let gx = g.forward(masked.clone(), Mode::Train).unwrap();
    let scores = d.forward(gx.clone(), Mode::Train).unwrap();
    let mut dscore = adversarial_loss_g_grad(&scores);
    dscore.mapv_inplace(|v| v * sched.lambda_adv);
    let dgx_adv = d.backward(dscore);
    let mut dgx = reconstruction_loss_grad(&x, &gx);
    dgx.mapv_inplace(|v| v * sched.lambda_rec);
    dgx += &dgx_adv;
    g.backward(dgx);

    let coords = sample_coords(&g, 200, &mut rng);
    let analytic: Vec<(usize, usize, f64)> = coords
        .iter()
        .map(|&(pi, idx)| {
            let grad = g.params()[pi].grad.as_slice().unwrap()[idx];
            (pi, idx, grad)
        })
        .collect();

    let (ok, checked) = check_against_fd(&analytic, 200, |pi, idx, eps| {
        let orig = {
            let mut params = g.params_mut();
            let v = params[pi].value.as_slice_mut().unwrap();
            let orig = v[idx];
            v[idx] = orig + eps;
            orig
        };
        let loss = g_loss(&mut g, &mut d, &masked, &x, &sched);
        let mut params = g.params_mut();
        params[pi].value.as_slice_mut().unwrap()[idx] = orig;
        loss
    });
    assert!(checked >= 200, "only {checked} smooth coordinates checked");
    let frac = ok as f64 / checked as f64;
    assert!(
        frac >= 0.99,
        "generator gradients: {ok}/{checked} within tolerance ({frac:.4})"
    );
}

#[test]
fn discriminator_loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dcfg = DiscriminatorConfig::miniature();
    let mut d = build_discriminator::<f64>(&dcfg, 21).unwrap();
    spread_params(&mut d, 103);
    let real = random_batch(&mut rng, 2, dcfg.input_size);
    let fake = random_batch(&mut rng, 2, dcfg.input_size);

    d.zero_grad();
    let rs = d.forward(real.clone(), Mode::Train).unwrap();
    let (dreal, _) = discriminator_loss_grad(&rs, &rs);
    d.backward(dreal);
    let fs = d.forward(fake.clone(), Mode::Train).unwrap();
    let (_, dfake) = discriminator_loss_grad(&rs, &fs);
    d.backward(dfake);

    let coords = sample_coords(&d, 120, &mut rng);
    let analytic: Vec<(usize, usize, f64)> = coords
        .iter()
        .map(|&(pi, idx)| {
            let grad = d.params()[pi].grad.as_slice().unwrap()[idx];
            (pi, idx, grad)
        })
        .collect();

    let (ok, checked) = check_against_fd(&analytic, 200, |pi, idx, eps| {
        let orig = {
            let mut params = d.params_mut();
            let v = params[pi].value.as_slice_mut().unwrap();
            let orig = v[idx];
            v[idx] = orig + eps;
            orig
        };
        let loss = d_loss(&mut d, &real, &fake);
        let mut params = d.params_mut();
        params[pi].value.as_slice_mut().unwrap()[idx] = orig;
        loss
    });
    assert!(checked >= 200, "only {checked} smooth coordinates checked");
    let frac = ok as f64 / checked as f64;
    assert!(
        frac >= 0.99,
        "discriminator gradients: {ok}/{checked} within tolerance ({frac:.4})"
    );
}

#[test]
fn loss_gradient_formulas_match_finite_differences() {
    // Direct FD on the loss-vs-scores functions, no network involved.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores = Array4::from_shape_fn((2, 1, 3, 3), |_| rng.gen_range(-1.0..1.5));
    let grad = adversarial_loss_g_grad(&scores);
    for idx in [(0, 0, 0, 0), (1, 0, 2, 1), (0, 0, 1, 2)] {
        let mut sp = scores.clone();
        sp[idx] += FD_STEP;
        let mut sm = scores.clone();
        sm[idx] -= FD_STEP;
        let fd = (adversarial_loss_g(&sp) - adversarial_loss_g(&sm)) / (2.0 * FD_STEP);
        assert!((grad[idx] - fd).abs() < 1e-8, "{} vs {fd}", grad[idx]);
    }
}
