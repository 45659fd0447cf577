use sjko_core::datasets::SamplerSpec;
use sjko_core::divergence::FDivKind;
use sjko_core::linalg::Matrix;
use sjko_core::nets::{mlp_forward, Activation, TransportRef};
use sjko_core::rng::StreamRng;
use sjko_core::sjko::*;
use sjko_core::wgf::GaussianDist;
use sjko_core::{Error, RealTensor};

fn small_config(seed: u64) -> SjkoConfig {
    let mut c = SjkoConfig::new(2.0);
    c.phases = 2;
    c.iters_per_phase = 5;
    c.batch_size = 16;
    c.seed = seed;
    c.transport_net = NetConfig::new(&[8, 8], Activation::Silu);
    c.potential_net = NetConfig::new(&[8, 8], Activation::Silu);
    c
}

fn gaussian_source() -> SamplerSpec {
    SamplerSpec::StandardGaussian { dim: 2 }
}

fn trainer(c: SjkoConfig) -> SjkoTrainer {
    SjkoTrainer::new(c, gaussian_source(), SamplerSpec::TwoCircles).unwrap()
}

fn no_metrics(_: &SjkoTrainer) -> sjko_core::Result<Vec<(String, f64)>> {
    Ok(Vec::new())
}

#[test]
fn one_iteration_moves_both_networks_but_not_the_reference() {
    let mut t = trainer(small_config(0));
    let (theta, phi) = (t.transport_params().clone(), t.potential_params().clone());
    t.inner_iteration(&NoClock).unwrap();
    assert_ne!(&theta, t.transport_params());
    assert_ne!(&phi, t.potential_params());
    assert!(t.reference().is_empty());
    assert_eq!(t.transport_adam().t, 1);
    assert_eq!(t.potential_adam().t, 1);
}

#[test]
fn recorded_losses_replay_from_logged_batches() {
    let mut t = trainer(small_config(3));
    t.set_log_batches(true);
    for _ in 0..3 {
        t.inner_iteration(&NoClock).unwrap();
    }
    let rec = *t.trace().iterations.last().unwrap();
    let logged = t.last_batches().unwrap();
    let spec = t.potential_spec();
    let v_fake = mlp_forward(spec, &logged.potential_before, &logged.fake, None).unwrap();
    let v_real = mlp_forward(spec, &logged.potential_before, &logged.real, None).unwrap();
    let lv = potential_loss(FDivKind::Kld, v_fake.data(), v_real.data(), 0.0, 0.0).unwrap();
    assert!(
        (lv - rec.loss_potential).abs() <= 1e-12,
        "{lv} vs {}",
        rec.loss_potential
    );
    let v_new = mlp_forward(spec, &logged.potential_after, &logged.y_new, None).unwrap();
    let lt = transport_loss(FDivKind::Kld, &logged.y_old, &logged.y_new, v_new.data(), 2.0, false).unwrap();
    assert!(
        (lt - rec.loss_transport).abs() <= 1e-12,
        "{lt} vs {}",
        rec.loss_transport
    );
    // First phase: the reference map is the identity, so y_old are raw source draws.
    assert_eq!(logged.y_old.cols(), 2);
}

#[test]
fn single_phase_matches_source_fixed_uotm() {
    let mut a = small_config(11);
    a.phases = 1;
    a.iters_per_phase = 60;
    let mut b = a.clone();
    b.objective = Objective::Uotm {
        source: FDivKind::Indicator,
        target: FDivKind::Kld,
    };
    let ta = train(a, gaussian_source(), SamplerSpec::Gmm25, &NoClock, &mut no_metrics).unwrap();
    let tb = train(b, gaussian_source(), SamplerSpec::Gmm25, &NoClock, &mut no_metrics).unwrap();
    let (la, lb) = (ta.trace.losses(), tb.trace.losses());
    assert_eq!(la.len(), 60);
    for (x, y) in la.iter().zip(&lb) {
        assert!((x.2 - y.2).abs() <= 1e-12 && (x.3 - y.3).abs() <= 1e-12);
    }
    assert_eq!(ta.transport, tb.transport);
}

#[test]
fn reference_is_identity_only_in_the_first_phase() {
    let mut t = trainer(small_config(1));
    assert!(t.reference().is_empty());
    t.run_phase(&NoClock).unwrap();
    assert_eq!(t.reference().len(), 1);
    // After the boundary the reference reproduces the live network exactly.
    let x = RealTensor::matrix(5, 2, StreamRng::new(0, 0).normals(10)).unwrap();
    let live = mlp_forward(t.transport_spec(), t.transport_params(), &x, None).unwrap();
    assert_eq!(t.reference()[0].eval(&x, None).unwrap(), live);
    let frozen = t.reference()[0].clone();
    for _ in 0..3 {
        t.inner_iteration(&NoClock).unwrap();
        assert_eq!(t.reference()[0], frozen);
    }
    assert_ne!(
        t.reference()[0].eval(&x, None).unwrap(),
        mlp_forward(t.transport_spec(), t.transport_params(), &x, None).unwrap()
    );
}

#[test]
fn reparametrized_sampling_uses_one_network() {
    let mut t = trainer(small_config(2));
    t.train(&NoClock, &mut no_metrics).unwrap();
    assert_eq!(t.pushforward_maps().len(), 1);
    let mut c = small_config(2);
    c.phases = 3;
    c.composition = Composition::Sequential;
    let mut s = trainer(c);
    s.train(&NoClock, &mut no_metrics).unwrap();
    assert_eq!(s.pushforward_maps().len(), 3);
    assert_eq!(s.reference().len(), 3);
}

#[test]
fn iteration_counts() {
    let mut c = small_config(0);
    c.phases = 1;
    c.iters_per_phase = 1;
    let out = train(
        c.clone(),
        gaussian_source(),
        SamplerSpec::TwoCircles,
        &NoClock,
        &mut no_metrics,
    )
    .unwrap();
    assert_eq!(out.trace.iterations.len(), 1);
    c.first_phase_iters = Some(4);
    let out = train(
        c.clone(),
        gaussian_source(),
        SamplerSpec::TwoCircles,
        &NoClock,
        &mut no_metrics,
    )
    .unwrap();
    assert_eq!(out.trace.iterations.len(), 4);
    c.phases = 3;
    c.iters_per_phase = 2;
    let mut calls = Vec::new();
    let out = train(c, gaussian_source(), SamplerSpec::TwoCircles, &NoClock, &mut |t| {
        calls.push(t.phase());
        Ok(vec![("n".into(), t.trace().iterations.len() as f64)])
    })
    .unwrap();
    assert_eq!(out.trace.iterations.len(), 4 + 2 * 2);
    assert_eq!(calls, vec![1, 2, 3]);
    assert_eq!(out.trace.phases[2].metrics, vec![("n".to_string(), 8.0)]);
    let phases: Vec<usize> = out.trace.iterations.iter().map(|r| r.phase).collect();
    assert_eq!(phases, vec![0, 0, 0, 0, 1, 1, 2, 2]);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let run = |seed| {
        let mut c = small_config(seed);
        c.aux_noise_dim = 2;
        c.r1_weight = 0.1;
        train(c, gaussian_source(), SamplerSpec::Gmm25, &NoClock, &mut no_metrics).unwrap()
    };
    let (a, b, c) = (run(5), run(5), run(6));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.transport, b.transport);
    assert_ne!(a.trace, c.trace);
    assert!(a.trace.iterations.iter().all(|r| r.r1 > 0.0));
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let mut c = small_config(8);
    c.phases = 3;
    c.aux_noise_dim = 1;
    let mut full = trainer(c.clone());
    full.train(&NoClock, &mut no_metrics).unwrap();

    let mut first = trainer(c);
    first.run_phase(&NoClock).unwrap();
    assert!(first.clone().inner_iteration(&NoClock).is_ok());
    let ckpt = first.checkpoint().unwrap();
    let mut resumed = SjkoTrainer::restore(ckpt, gaussian_source(), SamplerSpec::TwoCircles).unwrap();
    resumed.train(&NoClock, &mut no_metrics).unwrap();
    let tail = &full.trace().iterations[5..];
    assert_eq!(tail, &resumed.trace().iterations[..]);
    assert_eq!(full.transport_params(), resumed.transport_params());
    assert_eq!(full.potential_params(), resumed.potential_params());

    first.inner_iteration(&NoClock).unwrap();
    assert!(first.checkpoint().is_err());
}

#[test]
fn jsd_and_relaxed_uotm_train_with_finite_losses() {
    let mut c = small_config(4);
    c.divergence = FDivKind::Jsd;
    let out = train(
        c.clone(),
        gaussian_source(),
        SamplerSpec::TwoCircles,
        &NoClock,
        &mut no_metrics,
    )
    .unwrap();
    assert!(out
        .trace
        .iterations
        .iter()
        .all(|r| r.loss_potential.is_finite() && r.loss_transport.is_finite()));
    c.divergence = FDivKind::Kld;
    c.objective = Objective::Uotm {
        source: FDivKind::Kld,
        target: FDivKind::Kld,
    };
    let out = train(c, gaussian_source(), SamplerSpec::Gmm25, &NoClock, &mut no_metrics).unwrap();
    assert!(out.trace.iterations.iter().all(|r| r.loss_potential.is_finite()));
    // The reference map never moves for UOTM.
    assert!(out.trainer.reference().is_empty());
}

#[test]
fn overflow_reports_phase_and_iteration_with_partial_trace() {
    let mut c = small_config(0);
    c.phases = 2;
    c.iters_per_phase = 3;
    let far = GaussianDist::new(vec![1e200, 0.0], Matrix::identity(2)).unwrap();
    let source = SamplerSpec::Gaussian(far);
    let err = train(c, source, SamplerSpec::TwoCircles, &NoClock, &mut no_metrics).unwrap_err();
    assert!(
        matches!(
            err.error,
            Error::Training {
                phase: 0,
                iteration: 0,
                ..
            }
        ),
        "{:?}",
        err.error
    );
    assert!(err.trace.iterations.is_empty());
}

#[test]
fn invalid_setups_are_rejected() {
    let mut c = small_config(0);
    c.batch_size = 1;
    assert!(SjkoTrainer::new(c, gaussian_source(), SamplerSpec::TwoCircles).is_err());
    let c = small_config(0);
    assert!(SjkoTrainer::new(c, SamplerSpec::StandardGaussian { dim: 3 }, SamplerSpec::TwoCircles).is_err());
}

#[test]
fn pushforward_samples() {
    let n = 4000;
    let id = sample_pushforward(&[], &gaussian_source(), n, 3).unwrap();
    let bound = 4.0 / (n as f64).sqrt();
    for j in 0..2 {
        let m: f64 = (0..n).map(|i| id.point(i)[j]).sum::<f64>() / n as f64;
        assert!(m.abs() < bound, "{m}");
    }
    let again = sample_pushforward(&[TransportRef::Identity], &gaussian_source(), n, 3).unwrap();
    assert_eq!(id.points, again.points);

    let t = trainer(small_config(0));
    let mut maps = t.pushforward_maps();
    if let TransportRef::Frozen { params, spec } = &mut maps[0] {
        let last = params.segments().len() - 1;
        params.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        params.segment_mut(last).copy_from_slice(&[1.5, -2.0]);
        assert_eq!(spec.out_dim, 2);
    }
    let c = sample_pushforward(&maps, &gaussian_source(), 50, 1).unwrap();
    assert!((0..50).all(|i| c.point(i) == [1.5, -2.0]));
    assert_eq!(t.sample(100, 7).unwrap().points, t.sample(100, 7).unwrap().points);
    assert_ne!(t.sample(100, 7).unwrap().points, t.sample(100, 8).unwrap().points);
}
