//! Chains convolutions with optional ReLUs, quantizing each layer's input afresh.

use crate::cost::{self, OpLedger};
use crate::quant::{quantize_feature, quantize_qq, quantize_weight, Granularity, QuantizedFeature, StepSizeTable};
use crate::tensor::Tensor;

use super::pipelines::{conv_channelwise, conv_elementwise, conv_qq, conv_reference};
use super::{ConvError, ConvSpec, Pipeline, WidthAudit};

#[derive(Clone, Debug)]
pub struct BlockLayer {
    /// `C x C_out x K x K`, same padding.
    pub weight: Tensor,
    /// Apply a ReLU to this layer's output.
    pub relu: bool,
}

#[derive(Clone, Debug)]
pub struct LayerReport {
    pub spec: ConvSpec,
    /// The quantized input of this layer; `None` for the reference pipeline.
    pub feature: Option<QuantizedFeature>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_mean: f64,
    pub width_audit: WidthAudit,
}

#[derive(Clone, Debug)]
pub struct BlockOutput {
    pub y: Tensor,
    pub ledger: OpLedger,
    pub layers: Vec<LayerReport>,
}

/// Runs `layers` in order. A layer's input counts as post-ReLU when the previous layer applied
/// one; the block input never does. Weights use one layer-wide scale.
pub fn run_block(
    x: &Tensor,
    layers: &[BlockLayer],
    bits: u8,
    qq_bits: u8,
    table: &StepSizeTable,
    pipeline: Pipeline,
) -> Result<BlockOutput, ConvError> {
    let mut current = x.clone();
    let mut ledger = OpLedger::new();
    let mut reports = Vec::with_capacity(layers.len());
    let mut post_relu = false;
    for (idx, layer) in layers.iter().enumerate() {
        let spec = ConvSpec::from_shapes(current.shape(), layer.weight.shape())
            .map_err(|e| ConvError::Shape(format!("layer {idx}: {e}")))?
            .with_bits(bits)
            .with_qq_bits(qq_bits)
            .with_post_relu(post_relu);
        spec.validate()?;
        let (y, feature, width_audit) = match pipeline {
            Pipeline::Reference => (conv_reference(&current, &layer.weight, &spec)?, None, WidthAudit::default()),
            _ => {
                let qx = quantize_feature(&current, bits, table, post_relu)?;
                let qw = quantize_weight(&layer.weight, bits, table, Granularity::Layer)?;
                let out = match pipeline {
                    Pipeline::Elementwise => conv_elementwise(&qx, &qw, &spec)?,
                    Pipeline::Channelwise => conv_channelwise(&qx, &qw, &spec)?,
                    _ => {
                        let qq = quantize_qq(&qx.means(), &qx.sigmas(), qq_bits, table)?;
                        conv_qq(&qx, &qw, &qq, &spec)?
                    }
                };
                (out.y, Some(qx), out.width_audit)
            }
        };
        ledger.merge(&cost::pipeline_ledger(pipeline, &spec));
        let alphas: Vec<f64> = feature.as_ref().map(|q| q.channels().iter().map(|p| p.alpha).collect()).unwrap_or_else(|| vec![0.0]);
        reports.push(LayerReport {
            spec,
            feature,
            alpha_min: alphas.iter().copied().fold(f64::INFINITY, f64::min),
            alpha_max: alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            alpha_mean: alphas.iter().sum::<f64>() / alphas.len() as f64,
            width_audit,
        });
        current = if layer.relu { y.relu() } else { y };
        post_relu = layer.relu;
    }
    Ok(BlockOutput { y: current, ledger, layers: reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::dequantize_feature;
    use crate::tensor::{generate, Distribution};

    fn table() -> StepSizeTable {
        StepSizeTable::gaussian()
    }

    #[test]
    fn single_layer_matches_direct_call() {
        let x = generate(&[3, 6, 6], 1, Distribution::STANDARD_NORMAL).unwrap();
        let w = generate(&[3, 4, 3, 3], 2, Distribution::STANDARD_NORMAL).unwrap();
        let out = run_block(&x, &[BlockLayer { weight: w.clone(), relu: false }], 2, 4, &table(), Pipeline::Channelwise).unwrap();
        let spec = ConvSpec::new(3, 4, 3, 6, 6);
        let qx = quantize_feature(&x, 2, &table(), false).unwrap();
        let qw = quantize_weight(&w, 2, &table(), Granularity::Layer).unwrap();
        let direct = conv_channelwise(&qx, &qw, &spec).unwrap();
        assert_eq!(out.y, direct.y);
        assert_eq!(out.ledger, direct.ledger);
    }

    #[test]
    fn second_layer_sees_shifted_windows() {
        let x = generate(&[3, 8, 8], 5, Distribution::STANDARD_NORMAL).unwrap();
        let w1 = generate(&[3, 4, 3, 3], 6, Distribution::STANDARD_NORMAL).unwrap();
        let w2 = generate(&[4, 2, 3, 3], 7, Distribution::STANDARD_NORMAL).unwrap();
        let layers = [BlockLayer { weight: w1, relu: true }, BlockLayer { weight: w2, relu: false }];
        for pipeline in [Pipeline::Elementwise, Pipeline::Channelwise, Pipeline::Qq] {
            let out = run_block(&x, &layers, 2, 4, &table(), pipeline).unwrap();
            assert_eq!(out.y.shape(), &[2, 8, 8]);
            let second = &out.layers[1];
            assert!(second.spec.post_relu && second.alpha_min >= 0.0);
            let q = second.feature.as_ref().unwrap();
            let d = dequantize_feature(q);
            for (c, p) in q.channels().iter().enumerate() {
                let lowest = d.data()[c * 64..(c + 1) * 64].iter().copied().fold(f64::INFINITY, f64::min);
                assert!(lowest >= -p.sigma * q.step() - 1e-12, "channel {c}: {lowest}");
                assert!(q.min_level(c) >= -p.sigma * q.step() - 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let x = generate(&[2, 5, 5], 8, Distribution::STANDARD_NORMAL).unwrap();
        let layers = [
            BlockLayer { weight: Tensor::zeros(vec![2, 3, 3, 3]).unwrap(), relu: true },
            BlockLayer { weight: Tensor::zeros(vec![3, 2, 1, 1]).unwrap(), relu: false },
        ];
        for pipeline in Pipeline::ALL {
            let out = run_block(&x, &layers, 2, 4, &table(), pipeline).unwrap();
            assert!(out.y.data().iter().all(|&v| v == 0.0), "{pipeline}");
        }
    }

    #[test]
    fn incompatible_layers() {
        let x = generate(&[2, 5, 5], 8, Distribution::STANDARD_NORMAL).unwrap();
        let layers = [BlockLayer { weight: Tensor::zeros(vec![3, 3, 3, 3]).unwrap(), relu: false }];
        assert!(matches!(run_block(&x, &layers, 2, 4, &table(), Pipeline::Qq), Err(ConvError::Shape(_))));
    }
}
