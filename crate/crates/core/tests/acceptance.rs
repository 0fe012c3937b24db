//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or overruns its time budget.

mod common;

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor, Var};
use image::Rgb;
use lesionsynth::cli::config::DEFAULT_TEST_FRACTION;
use lesionsynth::cli::{ingest_dataset, parse_config_str, Split};
use lesionsynth::evalharness::{
    auc, paired_t_test, run_experiment, ClassifierRegistry, DatasetSpec, ExperimentConfig, Source,
};
use lesionsynth::mapkit::{boundary_map, slic_superpixels, InstanceMap, RgbImage};
use lesionsynth::objectives::{
    feature_matching_layers, lsgan_d_loss, lsgan_g_loss, total_losses, LossWeights,
};
use lesionsynth::proggan::{
    condition_concat, fade_alpha, labels_tensor, ConditionLabel, PganConfig, PganDiscriminator,
    PganGenerator, ResolutionSchedule,
};
use lesionsynth::synthnet::nn::scalar;
use lesionsynth::synthnet::{
    downsample_pyramid, DiscriminatorConfig, FeaturePyramid, Generator, GeneratorConfig,
    ScaleOutput,
};
use lesionsynth::toy::{labeled, toy_corpus, toy_pools, toy_sample, ToyParams, ToyPoolOptions};
use lesionsynth::trainer::{fingerprint_of, Checkpoint, Pix2PixHd, TrainingConfig, TrainingPair};
use lesionsynth::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (si, &li) in scores.iter().zip(labels) {
        for (sj, &lj) in scores.iter().zip(labels) {
            if li && !lj {
                pairs += 1.0;
                num += match si.partial_cmp(sj).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    num / pairs
}

fn auc_oracle() -> Outcome {
    let mut r = rng(1);
    let mut cases = 0;
    while cases < 200 {
        let n = r.gen_range(2..=50);
        // Coarse scores so ties are common.
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..8) as f64 / 4.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| r.gen()).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let got = ok(auc(&scores, &labels))?;
        let want = brute_force_auc(&scores, &labels);
        ensure!(got == want, "case {cases}: auc {got} vs brute force {want}");
        cases += 1;
    }
    Ok(format!("{cases} cases exact"))
}

fn boundary_oracle(ids: &[u32], w: usize, h: usize) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let me = ids[y * w + x];
            let neighbours = [
                (x > 0).then(|| ids[y * w + x - 1]),
                (x + 1 < w).then(|| ids[y * w + x + 1]),
                (y > 0).then(|| ids[(y - 1) * w + x]),
                (y + 1 < h).then(|| ids[(y + 1) * w + x]),
            ];
            out[y * w + x] = u8::from(neighbours.iter().flatten().any(|&n| n != me));
        }
    }
    out
}

fn boundary_equivalence() -> Outcome {
    let mut r = rng(2);
    for case in 0..100 {
        let ids: Vec<u32> = (0..64).map(|_| r.gen_range(0..4)).collect();
        let map = ok(InstanceMap::new(8, 8, ids.clone()))?;
        ensure!(
            boundary_map(&map).values() == boundary_oracle(&ids, 8, 8).as_slice(),
            "case {case} differs from the oracle"
        );
    }
    Ok("100 maps exact".into())
}

fn connected(map: &InstanceMap, id: u32) -> bool {
    let (w, h) = (map.width() as usize, map.height() as usize);
    let ids = map.ids();
    let members = ids.iter().filter(|&&v| v == id).count();
    let Some(start) = ids.iter().position(|&v| v == id) else {
        return true;
    };
    let mut seen = vec![false; w * h];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 0;
    while let Some(i) = queue.pop_front() {
        reached += 1;
        let (x, y) = (i % w, i / w);
        let next = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        for j in next.into_iter().flatten() {
            if !seen[j] && ids[j] == id {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    reached == members
}

fn slic_properties() -> Outcome {
    let flat = RgbImage::from_pixel(20, 20, Rgb([120, 90, 60]));
    let map = ok(slic_superpixels(&flat, 4, 10.0, 10))?;
    ensure!(
        map.count_instances() == 4,
        "{} regions on a flat image",
        map.count_instances()
    );
    for (qx, qy) in [(0, 0), (10, 0), (0, 10), (10, 10)] {
        let id = map.get(qx, qy);
        for y in 0..20 {
            for x in 0..20 {
                let inside = (qx..qx + 10).contains(&x) && (qy..qy + 10).contains(&y);
                ensure!(
                    (map.get(x, y) == id) == inside,
                    "quadrant at ({qx},{qy}) is not exact"
                );
            }
        }
    }
    let mut r = rng(3);
    for case in 0..40 {
        let (w, h) = (r.gen_range(6..24), r.gen_range(6..24));
        let k = r.gen_range(1..12);
        let m = r.gen_range(1.0..40.0);
        let img = RgbImage::from_fn(w, h, |_, _| Rgb(r.gen()));
        let map = ok(slic_superpixels(&img, k, m, 5))?;
        ensure!(
            map.ids().len() == (w * h) as usize,
            "case {case}: not a full partition"
        );
        let mut ids: Vec<u32> = map.ids().to_vec();
        ids.sort_unstable();
        ids.dedup();
        for id in ids {
            ensure!(
                connected(&map, id),
                "case {case}: region {id} is not 4-connected"
            );
        }
    }
    Ok("exact quadrants; 40 random images partition into connected regions".into())
}

fn full(v: f64) -> Tensor {
    Tensor::full(v, (1, 1, 4, 4), &Device::Cpu).unwrap()
}

fn loss_closed_forms() -> Outcome {
    let real = [full(0.8), full(0.6)];
    let fake = [full(0.3), full(-0.2)];
    let d = ok(scalar(&ok(lsgan_d_loss(&real, &fake))?))?;
    let d_hand = 0.5 * (0.2f64.powi(2) + 0.4f64.powi(2)) + 0.5 * (0.3f64.powi(2) + 0.2f64.powi(2));
    ensure!((d - d_hand).abs() <= 1e-6, "d-loss {d} vs {d_hand}");
    let g = ok(scalar(&ok(lsgan_g_loss(&fake))?))?;
    let g_hand = 0.7f64.powi(2) + 1.2f64.powi(2);
    ensure!((g - g_hand).abs() <= 1e-6, "g-loss {g} vs {g_hand}");

    let a = [full(1.0), full(2.0)];
    let b = [full(0.5), full(2.5)];
    let same = ok(scalar(&ok(feature_matching_layers(&[&a], &[&a]))?))?;
    ensure!(same == 0.0, "feature_matching(a, a) = {same}");

    let pyramid = |logits: &Tensor, feats: &[Tensor]| FeaturePyramid {
        scales: vec![ScaleOutput {
            features: feats.to_vec(),
            logits: logits.clone(),
        }],
    };
    let real_p = pyramid(&full(0.8), &a);
    let fake_p = pyramid(&full(0.3), &b);
    for lambda in [0.0, 1.0, 10.0, 2.5] {
        let w = LossWeights { lambda_fm: lambda };
        let terms = ok(total_losses(&real_p, &fake_p, &w))?;
        let total = ok(scalar(&terms.g_total))?;
        let want = terms.report.g_gan + lambda * terms.report.g_fm;
        ensure!(total == want, "lambda {lambda}: g_total {total} vs {want}");
    }
    Ok(format!(
        "d {d:.6}, g {g:.6}, g_total exact for four lambdas"
    ))
}

fn grad_error(x: &[f64], f: impl Fn(&Tensor) -> Tensor) -> f64 {
    let t = |v: &[f64]| Tensor::from_slice(v, (1, 1, 4, 4), &Device::Cpu).unwrap();
    let var = Var::from_tensor(&t(x)).unwrap();
    let grads = f(var.as_tensor()).backward().unwrap();
    let analytic = grads
        .get(var.as_tensor())
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1::<f64>()
        .unwrap();
    let h = 1e-3;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut up, mut down) = (x.to_vec(), x.to_vec());
        up[i] += h;
        down[i] -= h;
        let numeric = (scalar(&f(&t(&up))).unwrap() - scalar(&f(&t(&down))).unwrap()) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

fn gradient_check() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let a: Vec<f64> = (0..16).map(|_| r.gen_range(-3.0..3.0)).collect();
        // Keep b away from a: |a − b| has a kink where they agree.
        let b: Vec<f64> = a
            .iter()
            .map(|x| x + r.gen_range(0.01..2.0) * if r.gen() { 1.0 } else { -1.0 })
            .collect();
        let fixed = Tensor::from_slice(&b, (1, 1, 4, 4), &Device::Cpu).unwrap();
        let errs = [
            grad_error(&a, |x| {
                lsgan_d_loss(&[x.clone()], &[fixed.clone()]).unwrap()
            }),
            grad_error(&a, |x| {
                lsgan_d_loss(&[fixed.clone()], &[x.clone()]).unwrap()
            }),
            grad_error(&a, |x| lsgan_g_loss(&[x.clone()]).unwrap()),
            grad_error(&a, |x| {
                feature_matching_layers(&[&[x.clone()]], &[&[fixed.clone()]]).unwrap()
            }),
        ];
        for e in errs {
            worst = worst.max(e);
        }
    }
    ensure!(worst <= 1e-4, "worst relative error {worst:e}");
    Ok(format!("worst relative error {worst:.2e}"))
}

fn shape_suite() -> Outcome {
    let small = Generator::new(
        &GeneratorConfig {
            base_channels: 16,
            num_downsamples: 3,
            num_residual_blocks: 3,
            ..Default::default()
        },
        0,
    )
    .map_err(|e| e.to_string())?;
    let x = ok(Tensor::randn(0f32, 1.0, (1, 9, 64, 32), &Device::Cpu))?;
    let y = ok(small.forward(&x))?;
    ensure!(y.dims() == [1, 3, 64, 32], "64x32 output {:?}", y.dims());

    // Default depth and block count at a quarter of the width, so the
    // full-resolution pass fits in desk memory.
    let lean = ok(Generator::new(
        &GeneratorConfig {
            base_channels: 16,
            ..Default::default()
        },
        0,
    ))?;
    let x = ok(Tensor::randn(0f32, 1.0, (1, 9, 512, 1024), &Device::Cpu))?;
    let y = ok(lean.forward(&x))?;
    ensure!(
        y.dims() == [1, 3, 512, 1024],
        "512x1024 output {:?}",
        y.dims()
    );
    drop((x, y));

    let p = ok(downsample_pyramid(
        &ok(Tensor::zeros((2, 3, 64, 32), DType::F32, &Device::Cpu))?,
        3,
    ))?;
    let dims: Vec<&[usize]> = p.iter().map(|t| t.dims()).collect();
    ensure!(
        dims == [&[2, 3, 64, 32][..], &[2, 3, 32, 16], &[2, 3, 16, 8]],
        "pyramid {dims:?}"
    );

    let odd = ok(Tensor::zeros((1, 9, 60, 32), DType::F32, &Device::Cpu))?;
    ensure!(
        matches!(small.forward(&odd), Err(Error::InvalidArgument(_))),
        "generator accepted 60x32 with 3 downsamples"
    );
    ensure!(
        matches!(downsample_pyramid(&odd, 4), Err(Error::InvalidArgument(_))),
        "pyramid accepted 60x32 at 4 levels"
    );
    Ok("64x32 and 512x1024 shapes kept; pyramid halves; indivisible rejected".into())
}

fn overfit_smoke() -> Outcome {
    let cfg = TrainingConfig {
        width: 32,
        height: 64,
        seed: 7,
        generator: GeneratorConfig {
            base_channels: 16,
            num_downsamples: 3,
            num_residual_blocks: 3,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 16,
            ..Default::default()
        },
        ..Default::default()
    };
    let s = ok(toy_sample(0, true, 64, 24, 7))?;
    let image = image::imageops::crop_imm(&s.image, 16, 0, 32, 64).to_image();
    let coords: Vec<(u32, u32)> = (0..64u32)
        .flat_map(|y| (16..48u32).map(move |x| (x, y)))
        .collect();
    let sem = ok(lesionsynth::mapkit::SemanticLabelMap::new(
        32,
        64,
        coords.iter().map(|&(x, y)| s.semantic.get(x, y)).collect(),
    ))?;
    let inst = ok(InstanceMap::new(
        32,
        64,
        coords.iter().map(|&(x, y)| s.instance.get(x, y)).collect(),
    ))?;
    let pair = ok(TrainingPair::from_maps(
        "pair",
        &sem,
        Some(&inst),
        &image,
        true,
    ))?;
    let x = ok(pair.input.unsqueeze(0))?;
    let y = ok(pair.target.unsqueeze(0))?;
    let mut model = ok(Pix2PixHd::new(&cfg))?;
    let (mut at10, mut at300) = (f64::NAN, f64::NAN);
    for step in 1..=300 {
        let r = ok(model.train_step(&x, &y))?;
        ensure!(r.is_finite(), "non-finite losses at step {step}");
        match step {
            10 => at10 = r.g_fm,
            300 => at300 = r.g_fm,
            _ => {}
        }
    }
    ensure!(
        at300 <= 0.5 * at10,
        "g_fm {at300:.4} at step 300 vs {at10:.4} at step 10"
    );
    Ok(format!("g_fm {at10:.4} -> {at300:.4}"))
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> Result<f32, String> {
    let d = ok(ok(a - b)?.abs())?;
    ok(ok(ok(d.flatten_all())?.max(0))?.to_scalar::<f32>())
}

fn pgan_schedule() -> Outcome {
    let s = ResolutionSchedule {
        fade_epochs: 30,
        stable_epochs: 30,
        ..Default::default()
    };
    for (epoch, want) in [(0, 1.0 / 30.0), (29, 1.0), (45, 1.0)] {
        let a = ok(fade_alpha(epoch, &s))?;
        ensure!(
            (a - want).abs() <= 1e-12,
            "alpha({epoch}) = {a}, want {want}"
        );
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PganConfig {
        latent_dim: 8,
        fmap_base: 32,
        fmap_max: 8,
        batch_size: 4,
        schedule: ResolutionSchedule {
            target_res: 16,
            ..Default::default()
        },
        checkpoint_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let g = ok(PganGenerator::new(&cfg, 3))?;
    let d = ok(PganDiscriminator::new(&cfg, 4))?;
    let z = ok(Tensor::randn(0f32, 1.0, (2, 8), &Device::Cpu))?;
    let labels = ok(labels_tensor(&[
        ConditionLabel::Benign,
        ConditionLabel::Melanoma,
    ]))?;
    let up = ok(ok(g.forward(&z, &labels, 8, 1.0))?.upsample_nearest2d(16, 16))?;
    let at0 = ok(g.forward(&z, &labels, 16, 0.0))?;
    let e0 = max_abs_diff(&at0, &up)?;
    let at1 = ok(g.forward(&z, &labels, 16, 1.0))?;
    let near1 = ok(g.forward(&z, &labels, 16, 1.0 - 1e-9))?;
    let e1 = max_abs_diff(&at1, &near1)?;
    let img = ok(Tensor::randn(0f32, 1.0, (2, 3, 16, 16), &Device::Cpu))?;
    let d0 = ok(d.forward(&img, &labels, 16, 0.0))?;
    let d_prev = ok(d.forward(&ok(img.avg_pool2d(2))?, &labels, 8, 1.0))?;
    let ed = max_abs_diff(&d0, &d_prev)?;
    ensure!(
        e0 <= 1e-6 && e1 <= 1e-6 && ed <= 1e-6,
        "blend errors {e0:e} {e1:e} {ed:e}"
    );

    let x = ok(Tensor::randn(0f32, 1.0, (5, 3, 4), &Device::Cpu))?;
    for label in [ConditionLabel::Benign, ConditionLabel::Melanoma] {
        let y = ok(condition_concat(&x, label))?;
        ensure!(y.dims() == [7, 3, 4], "concat shape {:?}", y.dims());
        ensure!(
            max_abs_diff(&ok(y.narrow(0, 0, 5))?, &x)? == 0.0,
            "features altered"
        );
        for k in 0..2 {
            let plane = ok(ok(ok(y.get(5 + k))?.flatten_all())?.to_vec1::<f32>())?;
            ensure!(
                plane.iter().all(|&v| v == label.one_hot()[k]),
                "label plane {k} is not constant"
            );
        }
    }
    Ok(format!(
        "alpha table exact; blend errors {e0:.1e}/{e1:.1e}/{ed:.1e}"
    ))
}

fn statistics() -> Outcome {
    let mut r = rng(9);
    let mut checked = 0;
    while checked < 50 {
        let n = r.gen_range(2..12);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..1.0)).collect();
        let Ok(t) = paired_t_test(&a, &b) else {
            continue;
        };
        let p = 2.0 * ok(StudentsT::new(0.0, 1.0, t.df))?.cdf(-t.t.abs());
        ensure!(
            (t.p_value - p).abs() <= 1e-6,
            "sample {checked}: p {} vs {p}",
            t.p_value
        );
        checked += 1;
    }
    let worked = ok(paired_t_test(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.6]))?;
    ensure!(
        (worked.p_value - 0.0039).abs() <= 1e-3,
        "worked example p {}",
        worked.p_value
    );
    ensure!(
        matches!(
            paired_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]),
            Err(Error::DegenerateInput(_))
        ),
        "zero-variance differences were accepted"
    );
    Ok(format!(
        "{checked} samples within 1e-6; worked p {:.6}",
        worked.p_value
    ))
}

fn mini_experiment() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = ok(toy_corpus(&ToyParams::default(), 0))?;
    ensure!(corpus.len() == 200, "corpus has {} images", corpus.len());
    ensure!(
        corpus.iter().all(|s| s.image.dimensions() == (64, 64)),
        "toy images are not 64x64"
    );
    let (train, test) = corpus.split_at(140);
    let pools = ok(toy_pools(train, &ToyPoolOptions::new(work.path())))?;
    let n = train.len();
    let mut cfg = ExperimentConfig {
        specs: vec![
            ok(DatasetSpec::new("Real", &[(Source::Real, n)]))?,
            ok(DatasetSpec::new(
                "Real+Instance",
                &[(Source::Real, n), (Source::Instance, n)],
            ))?,
            ok(DatasetSpec::new(
                "Real+PGAN",
                &[(Source::Real, n), (Source::Pgan, n)],
            ))?,
        ],
        runs: 3,
        reference: Some("Real".into()),
        ..Default::default()
    };
    cfg.classifier_config.epochs = 4;
    let report = ok(run_experiment(
        &cfg,
        &pools,
        &labeled(test),
        &ClassifierRegistry::default(),
    ))?;
    print!("{}", report.to_csv());

    ensure!(report.rows.len() == 3, "{} rows", report.rows.len());
    for (row, size) in report.rows.iter().zip([n, 2 * n, 2 * n]) {
        ensure!(row.runs.len() == 3, "{}: {} runs", row.name, row.runs.len());
        ensure!(
            row.size == size,
            "{}: size {} vs {size}",
            row.name,
            row.size
        );
        ensure!(
            row.mean_auc_percent.is_finite() && row.std_auc_percent.is_finite(),
            "{}: mean/std not finite",
            row.name
        );
        let is_ref = row.name == "Real";
        ensure!(
            row.p_value.is_some() != is_ref,
            "{}: p-value {:?}",
            row.name,
            row.p_value
        );
    }
    let real = report.row("Real").ok_or("no Real row")?;
    ensure!(
        real.mean_auc_percent >= 90.0,
        "Real AUC {:.1}%",
        real.mean_auc_percent
    );
    Ok(format!("Real AUC {:.1}%", real.mean_auc_percent))
}

fn plumbing() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = TrainingConfig {
        width: 16,
        height: 16,
        generator: GeneratorConfig {
            base_channels: 4,
            num_downsamples: 2,
            num_residual_blocks: 1,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 4,
            num_scales: 2,
            num_layers: 2,
            ..Default::default()
        },
        checkpoint_dir: dir.path().join("ckpt"),
        ..Default::default()
    };
    let model = ok(Pix2PixHd::new(&cfg))?;
    let first = dir.path().join("a.ckpt");
    let second = dir.path().join("b.ckpt");
    ok(ok(model.to_checkpoint())?.save(&first))?;
    ok(ok(Checkpoint::load(&first))?.save(&second))?;
    let (a, b) = (ok(std::fs::read(&first))?, ok(std::fs::read(&second))?);
    ensure!(a == b, "checkpoint bytes changed on round trip");
    let restored = ok(Pix2PixHd::from_checkpoint(&ok(Checkpoint::load(&second))?))?;
    ensure!(
        ok(restored.to_checkpoint())?.to_bytes() == a,
        "restored model serializes differently"
    );

    let tree = dir.path().join("tree");
    common::placeholder_tree(&tree, 2594);
    let m = ok(ingest_dataset(&tree, DEFAULT_TEST_FRACTION, None))?;
    let split = (m.count(Split::Train), m.count(Split::Test));
    ensure!(split == (2346, 248), "split {split:?}");

    let text = common::tiny_config(&tree);
    let fp = ok(ok(parse_config_str(&text))?.fingerprint())?;
    ensure!(
        fp == ok(ok(parse_config_str(&text))?.fingerprint())?,
        "pipeline fingerprint varies"
    );
    ensure!(
        ok(fingerprint_of(&cfg))? == ok(fingerprint_of(&cfg.clone()))?,
        "training fingerprint varies"
    );
    let changed = TrainingConfig {
        seed: cfg.seed + 1,
        ..cfg.clone()
    };
    ensure!(
        ok(fingerprint_of(&changed))? != ok(fingerprint_of(&cfg))?,
        "fingerprint ignores the seed"
    );
    Ok(format!(
        "{} checkpoint bytes stable; split {}/{}",
        a.len(),
        split.0,
        split.1
    ))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        (
            "AUC equals pair enumeration",
            Duration::from_secs(10),
            auc_oracle,
        ),
        (
            "boundary map equals 4-neighbour oracle",
            Duration::from_secs(5),
            boundary_equivalence,
        ),
        ("SLIC properties", Duration::from_secs(30), slic_properties),
        (
            "loss closed forms",
            Duration::from_secs(60),
            loss_closed_forms,
        ),
        (
            "loss gradients match finite differences",
            Duration::from_secs(60),
            gradient_check,
        ),
        (
            "generator and pyramid shapes",
            Duration::from_secs(60),
            shape_suite,
        ),
        (
            "single-pair overfit",
            Duration::from_secs(300),
            overfit_smoke,
        ),
        (
            "progressive schedule and conditioning",
            Duration::from_secs(60),
            pgan_schedule,
        ),
        ("paired t-test", Duration::from_secs(10), statistics),
        (
            "toy end-to-end experiment",
            Duration::from_secs(900),
            mini_experiment,
        ),
        ("plumbing", Duration::from_secs(60), plumbing),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = t0.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "{status} criterion {n:2}: {name}: {detail} ({:.1}s)",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
