//! Analytic gradients against central finite differences (step 1e-5,
//! double precision) for every differentiable operation and for the
//! composed model blocks. Tolerances: 1e-4 for single ops, 1e-3 for
//! composed blocks.

mod common;

use common::{check_param_gradient, random_constant, random_tensor, weighted_probe};
use kinepose::loss::{online_loss, total_loss, weighted_loss, LossConfig, OnlineNorm};
use kinepose::mat::Mat;
use kinepose::model::{
    decode_final, derivative_features, encoder_level, interpolate_values, ModelConfig, PoseRefiner,
};
use kinepose::rng::Rng;
use kinepose::tensor::DiffTensor;

const H: f64 = 1e-5;
const OP_TOL: f64 = 1e-4;
const BLOCK_TOL: f64 = 1e-3;

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut rng = Rng::new(101);
    let a = random_tensor(&[3, 4], 1.0, &mut rng);
    let b = random_tensor(&[4, 2], 1.0, &mut rng);
    let f = || a.matmul(&b).unwrap().sum().item();
    let loss = a.matmul(&b).unwrap().sum();
    loss.backward().unwrap();
    let worst_a = check_param_gradient(&a, &a.grad().unwrap(), H, f);
    let worst_b = check_param_gradient(&b, &b.grad().unwrap(), H, f);
    assert!(worst_a < OP_TOL, "dA rel err {worst_a}");
    assert!(worst_b < OP_TOL, "dB rel err {worst_b}");
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    let mut rng = Rng::new(102);
    let x = random_tensor(&[4, 8], 1.0, &mut rng);
    let gamma = random_tensor(&[8], 1.0, &mut rng);
    let beta = random_tensor(&[8], 0.5, &mut rng);
    let f = || {
        weighted_probe(&x.layer_norm(&gamma, &beta, 1e-5).unwrap(), 999).item()
    };
    let loss = weighted_probe(&x.layer_norm(&gamma, &beta, 1e-5).unwrap(), 999);
    loss.backward().unwrap();
    for (name, t) in [("x", &x), ("gamma", &gamma), ("beta", &beta)] {
        let worst = check_param_gradient(t, &t.grad().unwrap(), H, f);
        assert!(worst < OP_TOL, "{name} rel err {worst}");
    }
}

#[test]
fn softmax_gradients_match_finite_differences() {
    let mut rng = Rng::new(103);
    let x = random_tensor(&[3, 5], 2.0, &mut rng);
    let f = || weighted_probe(&x.softmax(1).unwrap(), 555).item();
    let loss = weighted_probe(&x.softmax(1).unwrap(), 555);
    loss.backward().unwrap();
    let worst = check_param_gradient(&x, &x.grad().unwrap(), H, f);
    assert!(worst < OP_TOL, "softmax rel err {worst}");
}

#[test]
fn leaky_relu_gradient_away_from_kink() {
    let mut rng = Rng::new(104);
    // Keep entries away from 0 so the finite difference never straddles it.
    let data: Vec<f64> = (0..12)
        .map(|_| {
            let v = rng.uniform_in(0.2, 1.5);
            if rng.chance(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = DiffTensor::param(data, &[3, 4]);
    let f = || weighted_probe(&x.leaky_relu(0.01), 77).item();
    let loss = weighted_probe(&x.leaky_relu(0.01), 77);
    loss.backward().unwrap();
    let worst = check_param_gradient(&x, &x.grad().unwrap(), H, f);
    assert!(worst < OP_TOL, "leaky_relu rel err {worst}");
}

#[test]
fn conv1d_time_gradients_match_finite_differences() {
    let mut rng = Rng::new(105);
    let x = random_tensor(&[4, 3], 1.0, &mut rng);
    let w = random_tensor(&[3, 2], 1.0, &mut rng);
    let b = random_tensor(&[2], 0.5, &mut rng);
    let f = || weighted_probe(&x.conv1d_time(&w, &b).unwrap(), 31).item();
    let loss = weighted_probe(&x.conv1d_time(&w, &b).unwrap(), 31);
    loss.backward().unwrap();
    for (name, t) in [("x", &x), ("w", &w), ("b", &b)] {
        let worst = check_param_gradient(t, &t.grad().unwrap(), H, f);
        assert!(worst < OP_TOL, "{name} rel err {worst}");
    }
}

#[test]
fn abs_and_sqrt_gradients_away_from_zero() {
    let mut rng = Rng::new(106);
    let data: Vec<f64> = (0..8).map(|_| rng.uniform_in(0.3, 2.0)).collect();
    let x = DiffTensor::param(data, &[2, 4]);
    let f = || weighted_probe(&x.abs(), 11).item();
    let loss = weighted_probe(&x.abs(), 11);
    loss.backward().unwrap();
    assert!(check_param_gradient(&x, &x.grad().unwrap(), H, f) < OP_TOL);

    x.zero_grad();
    let f = || weighted_probe(&x.sqrt(), 12).item();
    let loss = weighted_probe(&x.sqrt(), 12);
    loss.backward().unwrap();
    assert!(check_param_gradient(&x, &x.grad().unwrap(), H, f) < OP_TOL);
}

fn small_config() -> ModelConfig {
    let mut cfg = ModelConfig::new(4, 2);
    cfg.t_window = 8;
    cfg.interval = 2;
    cfg.embed_dim = 4;
    cfg.levels = 1;
    cfg.heads = 2;
    cfg
}

#[test]
fn encoder_level_expansion_gradient() {
    // Gradient of the level's expansion matrix through attention + MLP.
    let cfg = small_config();
    let mut rng = Rng::new(107);
    let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
    common::randomize_params(&model, 42, 0.05);
    let z_prev = random_constant(&[cfg.sampled_frames(), cfg.embed_dim], 0.7, &mut rng);
    let level = &model.encoder.levels[0];

    let f = || weighted_probe(&encoder_level(&z_prev, level, &cfg).unwrap(), 21).item();
    let loss = weighted_probe(&encoder_level(&z_prev, level, &cfg).unwrap(), 21);
    loss.backward().unwrap();
    let worst = check_param_gradient(&level.expand, &level.expand.grad().unwrap(), H, f);
    assert!(worst < BLOCK_TOL, "expand rel err {worst}");
}

#[test]
fn offset_head_gradient_through_refinement() {
    // d ||P'||^2 / d offset-head weights, against finite differences.
    let cfg = small_config();
    let mut rng = Rng::new(108);
    let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
    common::randomize_params(&model, 43, 0.05);
    let window = Mat::from_fn(cfg.sampled_frames(), cfg.pose_width(), |t, c| {
        ((t * 7 + c) as f64 * 0.31).sin() * 0.4
    });
    let f = || {
        let out = model.forward(&window).unwrap();
        out.encoder.refined.mul(&out.encoder.refined).unwrap().sum().item()
    };
    let out = model.forward(&window).unwrap();
    let loss = out.encoder.refined.mul(&out.encoder.refined).unwrap().sum();
    loss.backward().unwrap();
    for head in &model.encoder.offset_heads {
        let analytic = head.weight.grad().unwrap();
        let worst = check_param_gradient(&head.weight, &analytic, H, f);
        assert!(worst < BLOCK_TOL, "offset head rel err {worst}");
    }
}

#[test]
fn derivative_feature_gradient_wrt_weights() {
    // d sum(S_a) / d w_a where S_a applies the affine to the squared input.
    let mut rng = Rng::new(109);
    let v = random_constant(&[5, 4], 1.0, &mut rng);
    let a = random_constant(&[5, 4], 1.0, &mut rng);
    let wa = random_tensor(&[4, 4], 0.6, &mut rng);
    let ba = random_tensor(&[4], 0.2, &mut rng);
    let affine = kinepose::model::decoder::DerivativeAffine {
        weight: wa.clone(),
        bias: ba.clone(),
    };
    let f = || {
        let (_, s_a) = derivative_features(&v, &a, None, Some(&affine)).unwrap();
        s_a.sum().item()
    };
    let (_, s_a) = derivative_features(&v, &a, None, Some(&affine)).unwrap();
    s_a.sum().backward().unwrap();
    let worst = check_param_gradient(&wa, &wa.grad().unwrap(), H, f);
    assert!(worst < OP_TOL, "w_a rel err {worst}");
}

#[test]
fn decoder_gradients_through_value_interpolation() {
    let cfg = small_config();
    let mut rng = Rng::new(110);
    let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
    common::randomize_params(&model, 44, 0.05);
    let t_s = cfg.sampled_frames();
    let kd = cfg.pose_width();
    let refined = random_constant(&[t_s, kd], 0.5, &mut rng);
    let s_v = random_constant(&[t_s, kd], 0.5, &mut rng);
    let s_a = random_constant(&[t_s, kd], 0.5, &mut rng);
    let x_mean = random_constant(&[t_s, kd], 0.5, &mut rng);

    let run = || {
        let (_, values) = interpolate_values(&refined, &model.decoder).unwrap();
        decode_final(&values, &[&s_v, &s_a, &x_mean], &model.decoder, &cfg).unwrap()
    };
    let f = || weighted_probe(&run(), 87).item();
    let loss = weighted_probe(&run(), 87);
    loss.backward().unwrap();
    for (name, t) in [
        ("interp", &model.decoder.interp),
        ("memory_proj", &model.decoder.memory_proj),
        ("output_proj", &model.decoder.output_proj),
    ] {
        let worst = check_param_gradient(t, &t.grad().unwrap(), H, f);
        assert!(worst < BLOCK_TOL, "{name} rel err {worst}");
    }
}

#[test]
fn weighted_loss_gradient_matches_finite_differences() {
    let mut rng = Rng::new(111);
    let (k, d, t) = (3, 2, 5);
    let pred = random_tensor(&[t, k * d], 0.8, &mut rng);
    let gt = random_constant(&[t, k * d], 0.8, &mut rng);
    let vis: Vec<bool> = (0..t * k).map(|_| rng.chance(0.8)).collect();
    let cfg = LossConfig { lambda_topk: 0.5, n_topk: 2, lambda_s: 1.0, norm: OnlineNorm::L1 };
    let f = || weighted_loss(&pred, &gt, &vis, &cfg, k, d).unwrap().loss.item();
    let loss = weighted_loss(&pred, &gt, &vis, &cfg, k, d).unwrap().loss;
    loss.backward().unwrap();
    let worst = check_param_gradient(&pred, &pred.grad().unwrap(), H, f);
    assert!(worst < BLOCK_TOL, "weighted loss rel err {worst}");
}

#[test]
fn online_loss_learner_gradient_matches_finite_differences() {
    // Construct the refined pose strictly worse at every joint, so the
    // final prediction is the (detached) target everywhere. Perturbing
    // the refined pose then never touches a frozen copy, and the finite
    // difference is well defined; the target side must hold exactly zero
    // gradient.
    let mut rng = Rng::new(112);
    let (k, d, t) = (3, 2, 4);
    let gt = random_constant(&[t, k * d], 1.0, &mut rng);
    let fin_data: Vec<f64> = gt.to_vec().iter().map(|v| v + 0.05).collect();
    let refined_data: Vec<f64> = gt.to_vec().iter().map(|v| v + 1.0).collect();
    let fin = DiffTensor::param(fin_data, &[t, k * d]);
    let refined = DiffTensor::param(refined_data, &[t, k * d]);
    let vis = vec![true; t * k];
    let cfg = LossConfig { lambda_topk: 0.5, n_topk: 2, lambda_s: 1.0, norm: OnlineNorm::L1PlusL2 };

    let out = online_loss(&refined, &fin, &gt, &vis, &cfg, k, d).unwrap();
    assert!(out
        .targets
        .iter()
        .all(|t| *t == Some(kinepose::loss::OnlineTarget::Final)));
    out.loss.backward().unwrap();

    let f = || online_loss(&refined, &fin, &gt, &vis, &cfg, k, d).unwrap().loss.item();
    let worst = check_param_gradient(&refined, &refined.grad().unwrap(), H, f);
    assert!(worst < BLOCK_TOL, "learner rel err {worst}");
    // Detached target: no gradient path at all.
    let g_fin = fin.grad().unwrap_or_else(|| vec![0.0; fin.numel()]);
    assert!(g_fin.iter().all(|g| g.abs() < 1e-15), "target leaked gradient: {g_fin:?}");
}

/// End-to-end pipeline loss with the online term's stop-gradient targets
/// held at externally fixed values, evaluated purely from raw numbers.
/// This is the function whose true derivative backprop-with-detachment
/// computes; differencing the raw total instead would wrongly flow
/// through the frozen copies.
#[allow(clippy::too_many_arguments)]
fn pipeline_loss_value(
    model: &PoseRefiner,
    window: &Mat,
    gt_sampled: &DiffTensor,
    gt_full: &DiffTensor,
    vis_s: &[bool],
    vis_f: &[bool],
    idx: &[usize],
    loss_cfg: &LossConfig,
    targets: &[Option<kinepose::loss::OnlineTarget>],
    frozen_refined: &[f64],
    frozen_final: &[f64],
) -> f64 {
    let cfg = &model.config;
    let (k, d) = (cfg.keypoints, cfg.dims);
    let out = model.forward(window).unwrap();
    let wr = weighted_loss(&out.encoder.refined, gt_sampled, vis_s, loss_cfg, k, d).unwrap();
    let wf = weighted_loss(&out.final_poses, gt_full, vis_f, loss_cfg, k, d).unwrap();

    let refined_now = out.encoder.refined.to_vec();
    let final_now: Vec<f64> = {
        let full = out.final_poses.to_vec();
        let width = k * d;
        idx.iter().flat_map(|&t| full[t * width..(t + 1) * width].to_vec()).collect()
    };
    let t_s = idx.len();
    let to_final =
        common::masked_l1_per_joint(&refined_now, frozen_final, vis_s, t_s, k, d);
    let to_refined =
        common::masked_l1_per_joint(&final_now, frozen_refined, vis_s, t_s, k, d);
    let mut online = 0.0;
    for (j, target) in targets.iter().enumerate() {
        match target {
            Some(kinepose::loss::OnlineTarget::Final) => online += to_final[j].unwrap(),
            Some(kinepose::loss::OnlineTarget::Refined) => online += to_refined[j].unwrap(),
            None => {}
        }
    }
    online /= k as f64;
    wr.loss.item() + loss_cfg.lambda_s * wf.loss.item() + online
}

#[test]
fn full_pipeline_loss_gradient_probes() {
    // End-to-end: window -> model -> total loss, probing parameters
    // spread across the encoder and decoder.
    let cfg = small_config();
    let mut rng = Rng::new(113);
    let model = PoseRefiner::new(cfg.clone(), &mut rng).unwrap();
    common::randomize_params(&model, 45, 0.05);

    let t_s = cfg.sampled_frames();
    let kd = cfg.pose_width();
    let window = Mat::from_fn(t_s, kd, |t, c| ((t * 3 + c) as f64 * 0.23).sin() * 0.5);
    let gt_sampled = random_constant(&[t_s, kd], 0.5, &mut rng);
    let gt_full = random_constant(&[cfg.t_window, kd], 0.5, &mut rng);
    let vis_s = vec![true; t_s * cfg.keypoints];
    let vis_f = vec![true; cfg.t_window * cfg.keypoints];
    let idx: Vec<usize> = (0..t_s).map(|i| i * cfg.interval).collect();
    let loss_cfg = LossConfig::for_joints(cfg.keypoints);

    // Base pass: analytic gradients plus the frozen online-target state.
    let out = model.forward(&window).unwrap();
    let (loss, _) = total_loss(
        &out.encoder.refined,
        &out.final_poses,
        &gt_sampled,
        &gt_full,
        &vis_s,
        &vis_f,
        &idx,
        &loss_cfg,
        cfg.keypoints,
        cfg.dims,
    )
    .unwrap();
    loss.backward().unwrap();
    let frozen_refined = out.encoder.refined.to_vec();
    let frozen_final: Vec<f64> = {
        let full = out.final_poses.to_vec();
        idx.iter().flat_map(|&t| full[t * kd..(t + 1) * kd].to_vec()).collect()
    };
    let final_sampled = out.final_poses.gather_rows(&idx).unwrap();
    let targets = online_loss(
        &out.encoder.refined,
        &final_sampled,
        &gt_sampled,
        &vis_s,
        &loss_cfg,
        cfg.keypoints,
        cfg.dims,
    )
    .unwrap()
    .targets;

    let f = || {
        pipeline_loss_value(
            &model,
            &window,
            &gt_sampled,
            &gt_full,
            &vis_s,
            &vis_f,
            &idx,
            &loss_cfg,
            &targets,
            &frozen_refined,
            &frozen_final,
        )
    };
    let params = model.named_params();
    let mut probe_rng = Rng::new(31415);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 10 {
        let (name, p) = &params[probe_rng.below(params.len())];
        if p.numel() == 0 {
            continue;
        }
        let i = probe_rng.below(p.numel());
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()])[i];
        let numeric = common::central_diff(p, i, H, &f);
        let err = common::rel_err(analytic, numeric, 1e-8);
        assert!(err < BLOCK_TOL, "{name}[{i}]: analytic {analytic} vs numeric {numeric}");
        worst = worst.max(err);
        checked += 1;
    }
    assert!(worst < BLOCK_TOL);
}
