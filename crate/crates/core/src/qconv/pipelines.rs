use crate::cost::{self, OpLedger};
use crate::exec::Exec;
use crate::quant::{dequantize_feature, dequantize_weight, Granularity, QQParams, QuantizedFeature, QuantizedWeight};
use crate::tensor::Tensor;

use super::kernel::{check_code_lengths, integer_sums, kernel_pass, ChannelCodes};
use super::{plan_widths, ConvError, ConvSpec, WidthAudit, WidthPlan};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    /// `C_out x H' x W'`
    pub y: Tensor,
    pub ledger: OpLedger,
    /// Empty for pipelines without integer stages.
    pub width_audit: WidthAudit,
}

fn check_shape(actual: &[usize], expected: &[usize], what: &str) -> Result<(), ConvError> {
    if actual != expected {
        return Err(ConvError::Shape(format!("{what} has shape {actual:?}, spec expects {expected:?}")));
    }
    Ok(())
}

/// FP64 convolution. Each output accumulates `x * w` over input channels, then kernel rows,
/// then kernel columns, into a single running sum; out-of-bounds taps are skipped.
pub fn conv_reference(x: &Tensor, w: &Tensor, spec: &ConvSpec) -> Result<Tensor, ConvError> {
    conv_reference_with(x, w, spec, Exec::default())
}

pub(crate) fn conv_reference_with(x: &Tensor, w: &Tensor, spec: &ConvSpec, exec: Exec) -> Result<Tensor, ConvError> {
    spec.validate()?;
    check_shape(x.shape(), &spec.feature_shape(), "feature")?;
    check_shape(w.shape(), &spec.weight_shape(), "weight")?;
    let (xd, wd) = (x.data(), w.data());
    let (h, wid, k, pad) = (spec.h, spec.w, spec.k, spec.pad());
    let (oh, ow) = spec.out_dims();
    let mut y = vec![0.0; spec.c_out * oh * ow];
    exec.for_each_chunk_mut(&mut y, oh * ow, |i, out| {
        for c in 0..spec.c_in {
            let xc = &xd[c * h * wid..(c + 1) * h * wid];
            let wk = &wd[(c * spec.c_out + i) * k * k..][..k * k];
            for oy in 0..oh {
                let u_lo = pad.saturating_sub(oy);
                let u_hi = k.min(h + pad - oy);
                for ox in 0..ow {
                    let v_lo = pad.saturating_sub(ox);
                    let v_hi = k.min(wid + pad - ox);
                    let mut acc = out[oy * ow + ox];
                    for u in u_lo..u_hi {
                        for v in v_lo..v_hi {
                            acc += xc[(oy + u - pad) * wid + ox + v - pad] * wk[u * k + v];
                        }
                    }
                    out[oy * ow + ox] = acc;
                }
            }
        }
    });
    Ok(Tensor::from_parts_unchecked(vec![spec.c_out, oh, ow], y))
}

fn check_operands(qx: &QuantizedFeature, qw: &QuantizedWeight, spec: &ConvSpec) -> Result<(), ConvError> {
    spec.validate()?;
    check_shape(&qx.shape(), &spec.feature_shape(), "quantized feature")?;
    check_shape(&qw.shape(), &spec.weight_shape(), "quantized weight")?;
    if qx.bits() != spec.bits || qw.bits() != spec.bits {
        return Err(ConvError::Mismatch(format!(
            "layer expects {} bits, feature has {} and weight {}",
            spec.bits,
            qx.bits(),
            qw.bits()
        )));
    }
    if qx.post_relu() != spec.post_relu {
        return Err(ConvError::Mismatch(format!("feature post-ReLU flag {} differs from spec {}", qx.post_relu(), spec.post_relu)));
    }
    Ok(())
}

fn layer_scale(qw: &QuantizedWeight) -> Result<f64, ConvError> {
    match qw.granularity() {
        Granularity::Layer => Ok(qw.scales()[0]),
        g => Err(ConvError::Granularity(g)),
    }
}

/// De-transforms both operands and convolves in FP64.
pub fn conv_elementwise(qx: &QuantizedFeature, qw: &QuantizedWeight, spec: &ConvSpec) -> Result<PipelineOutput, ConvError> {
    check_operands(qx, qw, spec)?;
    let y = conv_reference(&dequantize_feature(qx), &dequantize_weight(qw), spec)?;
    Ok(PipelineOutput { y, ledger: cost::elementwise_ledger(spec), width_audit: WidthAudit::default() })
}

pub fn conv_channelwise(qx: &QuantizedFeature, qw: &QuantizedWeight, spec: &ConvSpec) -> Result<PipelineOutput, ConvError> {
    conv_channelwise_with(qx, qw, spec, &plan_widths(spec), Exec::default())
}

/// Integer kernel sums per input channel, scaled by `sigma_c` and `mu_c` in FP64.
pub fn conv_channelwise_with(
    qx: &QuantizedFeature,
    qw: &QuantizedWeight,
    spec: &ConvSpec,
    plan: &WidthPlan,
    exec: Exec,
) -> Result<PipelineOutput, ConvError> {
    check_operands(qx, qw, spec)?;
    let sigma_w = layer_scale(qw)?;
    check_code_lengths(spec, qx.codes(), qw.codes())?;
    let (means, sigmas) = (qx.means(), qx.sigmas());
    let pos = spec.positions();
    let (planes, tracker) = kernel_pass(
        spec,
        qx.codes(),
        qw.codes(),
        exec,
        || (vec![0.0f64; pos], vec![0.0f64; pos]),
        |(acc_sigma, acc_mu), c, ks, ws, _| {
            for p in 0..pos {
                acc_sigma[p] += sigmas[c] * ks[p] as f64;
                acc_mu[p] += means[c] * ws[p] as f64;
            }
        },
    );
    let width_audit = tracker.audit(plan)?;
    let code_scale = sigma_w * qx.step() * qw.step();
    let mean_scale = sigma_w * qw.step();
    let mut y = Vec::with_capacity(spec.c_out * pos);
    for (acc_sigma, acc_mu) in planes {
        y.extend(acc_sigma.iter().zip(&acc_mu).map(|(a, b)| code_scale * a + mean_scale * b));
    }
    let (oh, ow) = spec.out_dims();
    Ok(PipelineOutput {
        y: Tensor::from_parts_unchecked(vec![spec.c_out, oh, ow], y),
        ledger: cost::channelwise_ledger(spec),
        width_audit,
    })
}

pub fn conv_qq(qx: &QuantizedFeature, qw: &QuantizedWeight, qq: &QQParams, spec: &ConvSpec) -> Result<PipelineOutput, ConvError> {
    conv_qq_with(qx, qw, qq, spec, &plan_widths(spec), Exec::default())
}

/// All four channel sums in integers; only the global factors
/// `sigma_w s_x s_w sigma_sigma s_m`, `sigma_w s_x s_w mu_sigma`, `sigma_w s_w sigma_mu s_m` and
/// `sigma_w s_w mu_mu` are FP.
pub fn conv_qq_with(
    qx: &QuantizedFeature,
    qw: &QuantizedWeight,
    qq: &QQParams,
    spec: &ConvSpec,
    plan: &WidthPlan,
    exec: Exec,
) -> Result<PipelineOutput, ConvError> {
    check_operands(qx, qw, spec)?;
    let sigma_w = layer_scale(qw)?;
    if qq.bits != spec.qq_bits {
        return Err(ConvError::Mismatch(format!("layer expects m = {}, parameters were quantized with {}", spec.qq_bits, qq.bits)));
    }
    let codes = ChannelCodes { feature: qx.codes(), weight: qw.codes(), mu: &qq.mu_codes, sigma: &qq.sigma_codes };
    let sums = integer_sums(spec, codes, plan, exec)?;
    let base = sigma_w * qx.step() * qw.step();
    let g_sigma_codes = base * qq.sigma_sd * qq.step;
    let g_sigma_mean = base * qq.sigma_mean;
    let g_mu_codes = sigma_w * qw.step() * qq.mu_sd * qq.step;
    let g_mu_mean = sigma_w * qw.step() * qq.mu_mean;
    let y = (0..sums.kernel_sum.len())
        .map(|p| {
            g_sigma_codes * sums.sigma_sum[p] as f64
                + g_sigma_mean * sums.kernel_sum[p] as f64
                + g_mu_codes * sums.mu_sum[p] as f64
                + g_mu_mean * sums.weight_sum[p] as f64
        })
        .collect();
    let (oh, ow) = spec.out_dims();
    Ok(PipelineOutput {
        y: Tensor::from_parts_unchecked(vec![spec.c_out, oh, ow], y),
        ledger: cost::qq_ledger(spec),
        width_audit: sums.audit,
    })
}
