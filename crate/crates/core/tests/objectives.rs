use candle_core::{Device, Tensor, Var};
use lesionsynth::objectives::{feature_matching_layers, lsgan_d_loss, lsgan_g_loss};
use lesionsynth::synthnet::nn::scalar;
use proptest::prelude::*;

fn t(v: &[f64]) -> Tensor {
    Tensor::from_slice(v, (1, 1, 4, 4), &Device::Cpu).unwrap()
}

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 16)
}

/// Max relative error between the autograd gradient of `f` at `x` and
/// central differences.
fn grad_error(x: &[f64], f: impl Fn(&Tensor) -> Tensor) -> f64 {
    let var = Var::from_tensor(&t(x)).unwrap();
    let loss = f(var.as_tensor());
    let grads = loss.backward().unwrap();
    let analytic = grads
        .get(var.as_tensor())
        .unwrap()
        .flatten_all()
        .unwrap()
        .to_vec1::<f64>()
        .unwrap();
    // Central differences are exact for quadratics and for |x − b| away from
    // the kink, so a wide step only trades away rounding noise.
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn losses_are_nonnegative(a in logits(), b in logits()) {
        prop_assert!(scalar(&lsgan_d_loss(&[t(&a)], &[t(&b)]).unwrap()).unwrap() >= 0.0);
        prop_assert!(scalar(&lsgan_g_loss(&[t(&a)]).unwrap()).unwrap() >= 0.0);
        let fm = feature_matching_layers(&[&[t(&a)]], &[&[t(&b)]]).unwrap();
        prop_assert!(scalar(&fm).unwrap() >= 0.0);
    }

    #[test]
    fn feature_matching_is_symmetric_and_zero_on_equal(a in logits(), b in logits()) {
        let ab = scalar(&feature_matching_layers(&[&[t(&a)]], &[&[t(&b)]]).unwrap()).unwrap();
        let ba = scalar(&feature_matching_layers(&[&[t(&b)]], &[&[t(&a)]]).unwrap()).unwrap();
        let aa = scalar(&feature_matching_layers(&[&[t(&a)]], &[&[t(&a)]]).unwrap()).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(aa, 0.0);
    }

    #[test]
    fn d_loss_is_minimal_at_the_targets(a in logits(), b in logits()) {
        let opt = scalar(&lsgan_d_loss(&[t(&[1.0; 16])], &[t(&[0.0; 16])]).unwrap()).unwrap();
        prop_assert_eq!(opt, 0.0);
        prop_assert!(scalar(&lsgan_d_loss(&[t(&a)], &[t(&b)]).unwrap()).unwrap() >= opt);
    }

    #[test]
    fn gradients_match_central_differences(a in logits(), b in logits()) {
        let fixed = t(&b);
        prop_assert!(grad_error(&a, |x| lsgan_d_loss(&[x.clone()], &[fixed.clone()]).unwrap()) <= 1e-4);
        prop_assert!(grad_error(&a, |x| lsgan_d_loss(&[fixed.clone()], &[x.clone()]).unwrap()) <= 1e-4);
        prop_assert!(grad_error(&a, |x| lsgan_g_loss(&[x.clone()]).unwrap()) <= 1e-4);
        // |a − b| is not differentiable where the two agree; keep away from it.
        prop_assume!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() > 1e-2));
        prop_assert!(grad_error(&a, |x| feature_matching_layers(&[&[x.clone()]], &[&[fixed.clone()]]).unwrap()) <= 1e-4);
    }
}
