//! Finer weight scale groups lower the reconstruction error in aggregate.

use daq_core::quant::{dequantize_weight, quantize_weight, Granularity, StepSizeTable};
use daq_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `8 x 8 x 3 x 3` weights whose input channels live on different scales.
fn weights(rng: &mut ChaCha8Rng) -> Tensor {
    let (c_in, c_out, kk) = (8, 8, 9);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let scales: Vec<f64> = (0..c_in).map(|_| rng.random_range(0.1..2.0)).collect();
    let data = (0..c_in * c_out * kk).map(|i| scales[i / (c_out * kk)] * normal.sample(rng)).collect();
    Tensor::new(vec![c_in, c_out, 3, 3], data).unwrap()
}

fn sse(w: &Tensor, n: u8, g: Granularity, table: &StepSizeTable) -> f64 {
    let d = dequantize_weight(&quantize_weight(w, n, table, g).unwrap());
    w.data().iter().zip(d.data()).map(|(a, b)| (a - b).powi(2)).sum()
}

#[test]
fn finer_groups_do_not_hurt_in_aggregate() {
    let table = StepSizeTable::gaussian();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7);
    let tensors: Vec<Tensor> = (0..200).map(|_| weights(&mut rng)).collect();
    for n in [1u8, 2, 3, 4, 8] {
        let total = |g| tensors.iter().map(|w| sse(w, n, g, &table)).sum::<f64>();
        let (layer, input, output, kernel) =
            (total(Granularity::Layer), total(Granularity::InputChannel), total(Granularity::OutputChannel), total(Granularity::Kernel));
        assert!(kernel <= input && input <= layer, "n={n}: kernel {kernel}, input-channel {input}, layer {layer}");
        assert!(output <= layer * 1.05, "n={n}: output-channel {output}, layer {layer}");
    }
}

#[test]
fn one_group_per_weight_tensor_agrees_across_granularities() {
    // a single 1x1 kernel: every granularity forms the same lone group
    let table = StepSizeTable::gaussian();
    let w = Tensor::new(vec![1, 1, 1, 1], vec![0.7]).unwrap();
    let codes: Vec<Vec<i32>> = Granularity::ALL.iter().map(|&g| quantize_weight(&w, 2, &table, g).unwrap().codes().to_vec()).collect();
    assert!(codes.windows(2).all(|p| p[0] == p[1]));
}
