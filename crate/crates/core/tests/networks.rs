use candle_core::{DType, Device, Tensor};
use lesionsynth::objectives::{total_losses, LossWeights};
use lesionsynth::synthnet::{
    downsample_pyramid, DiscriminatorConfig, Generator, GeneratorConfig, MultiScaleDiscriminator,
    ParamStore,
};
use proptest::prelude::*;

fn small_g() -> GeneratorConfig {
    GeneratorConfig {
        base_channels: 4,
        num_downsamples: 2,
        num_residual_blocks: 1,
        ..Default::default()
    }
}

fn small_d() -> DiscriminatorConfig {
    DiscriminatorConfig {
        base_channels: 4,
        num_layers: 2,
        max_channels: 16,
        ..Default::default()
    }
}

fn randn(shape: &[usize], scale: f64, seed: u64) -> Tensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let v: Vec<f32> = (0..n)
        .map(|_| (rng.gen_range(-1.0..1.0) * scale) as f32)
        .collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generator_keeps_spatial_shape_and_range(
        hm in 1usize..5, wm in 1usize..5, scale in prop::sample::select(vec![0.1, 1.0, 100.0, 1e6]),
        seed in any::<u64>(),
    ) {
        let g = Generator::new(&small_g(), 3).unwrap();
        let (h, w) = (4 * hm, 4 * wm);
        let y = g.forward(&randn(&[1, 9, h, w], scale, seed)).unwrap();
        prop_assert_eq!(y.dims(), &[1, 3, h, w]);
        let v = y.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        prop_assert!(v.iter().all(|x| x.is_finite() && (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn pyramid_levels_halve(hm in 1usize..6, wm in 1usize..6, levels in 1usize..4) {
        let m = 1 << (levels - 1);
        let (h, w) = (hm * m, wm * m);
        let p = downsample_pyramid(&randn(&[2, 3, h, w], 1.0, 0), levels).unwrap();
        prop_assert_eq!(p.len(), levels);
        for (i, t) in p.iter().enumerate() {
            prop_assert_eq!(t.dims(), &[2, 3, h >> i, w >> i]);
        }
    }

    #[test]
    fn discriminator_feature_lists_agree(hm in 1usize..3, wm in 1usize..3, seed in any::<u64>()) {
        let d = MultiScaleDiscriminator::new(&small_d(), 1).unwrap();
        let (h, w) = (16 * hm, 16 * wm);
        let cond = randn(&[1, 9, h, w], 1.0, seed);
        let real = d.forward(&cond, &randn(&[1, 3, h, w], 1.0, seed ^ 1)).unwrap();
        let fake = d.forward(&cond, &randn(&[1, 3, h, w], 1.0, seed ^ 2)).unwrap();
        prop_assert_eq!(real.scales.len(), 3);
        for (r, f) in real.scales.iter().zip(&fake.scales) {
            prop_assert_eq!(r.features.len(), f.features.len());
            for (a, b) in r.features.iter().zip(&f.features) {
                prop_assert_eq!(a.dims(), b.dims());
            }
        }
    }
}

fn grad_stats(
    params: &ParamStore,
    grads: &candle_core::backprop::GradStore,
) -> (usize, usize, Vec<String>) {
    let (mut total, mut nonzero, mut bad) = (0, 0, Vec::new());
    for (name, var) in params.iter() {
        total += 1;
        match grads.get(var.as_tensor()) {
            Some(g) => {
                let v = g
                    .flatten_all()
                    .unwrap()
                    .to_dtype(DType::F64)
                    .unwrap()
                    .to_vec1::<f64>()
                    .unwrap();
                if v.iter().any(|x| !x.is_finite()) {
                    bad.push(format!("{name}: non-finite"));
                } else if v.iter().any(|&x| x != 0.0) {
                    nonzero += 1;
                }
            }
            None => bad.push(format!("{name}: no gradient")),
        }
    }
    (total, nonzero, bad)
}

#[test]
fn every_parameter_receives_a_gradient() {
    let g = Generator::new(&small_g(), 5).unwrap();
    let d = MultiScaleDiscriminator::new(&small_d(), 6).unwrap();
    let cond = randn(&[1, 9, 32, 32], 1.0, 7);
    let real_img = randn(&[1, 3, 32, 32], 1.0, 8);
    let fake_img = g.forward(&cond).unwrap();

    let real = d.forward(&cond, &real_img).unwrap();
    let fake = d.forward(&cond, &fake_img).unwrap();
    let terms = total_losses(&real.detach(), &fake, &LossWeights::default()).unwrap();
    let (total, nonzero, bad) = grad_stats(g.params(), &terms.g_total.backward().unwrap());
    assert!(bad.is_empty(), "{bad:?}");
    assert!(
        nonzero as f64 >= 0.99 * total as f64,
        "generator: {nonzero}/{total} nonzero"
    );

    let fake = d.forward(&cond, &fake_img.detach()).unwrap();
    let terms = total_losses(&real, &fake, &LossWeights::default()).unwrap();
    let (total, nonzero, bad) = grad_stats(d.params(), &terms.d_total.backward().unwrap());
    assert!(bad.is_empty(), "{bad:?}");
    assert!(
        nonzero as f64 >= 0.99 * total as f64,
        "discriminator: {nonzero}/{total} nonzero"
    );
}
