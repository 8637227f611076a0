//! The shared integer kernel: per output channel and input channel, the in-bounds kernel sum
//! of code products (`KS`) and of weight codes (`WS`) at every output position.

use crate::exec::Exec;

use super::width::RangeTracker;
use super::{ConvError, ConvSpec, Site, WidthAudit, WidthPlan};

/// Raw integer operands: feature codes `C x H x W`, weight codes `C x C_out x K x K`, and the
/// per-channel mean and sigma codes.
#[derive(Clone, Copy, Debug)]
pub struct ChannelCodes<'a> {
    pub feature: &'a [i32],
    pub weight: &'a [i32],
    pub mu: &'a [i32],
    pub sigma: &'a [i32],
}

/// The four channel sums, each `C_out x H' x W'`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegerSums {
    /// `sum_c sigma_code_c * KS_c`
    pub sigma_sum: Vec<i64>,
    /// `sum_c KS_c`
    pub kernel_sum: Vec<i64>,
    /// `sum_c mu_code_c * WS_c`
    pub mu_sum: Vec<i64>,
    /// `sum_c WS_c`
    pub weight_sum: Vec<i64>,
    pub audit: WidthAudit,
}

fn observe_codes(tracker: &mut RangeTracker, site: Site, codes: &[i32]) {
    if let (Some(lo), Some(hi)) = (codes.iter().min(), codes.iter().max()) {
        tracker.observe_range(site, *lo as i64, *hi as i64);
    }
}

fn check_lengths(spec: &ConvSpec, feature: &[i32], weight: &[i32]) -> Result<(), ConvError> {
    let nf = spec.c_in * spec.h * spec.w;
    let nw = spec.c_in * spec.c_out * spec.k * spec.k;
    if feature.len() != nf || weight.len() != nw {
        return Err(ConvError::Shape(format!(
            "expected {nf} feature and {nw} weight codes, got {} and {}",
            feature.len(),
            weight.len()
        )));
    }
    Ok(())
}

/// Runs the kernel for every output channel, handing each input channel's `KS` and `WS` planes
/// to `per_channel`. Returns one state per output channel plus the merged value ranges.
pub(crate) fn kernel_pass<S, I, F>(
    spec: &ConvSpec,
    feature: &[i32],
    weight: &[i32],
    exec: Exec,
    init: I,
    per_channel: F,
) -> (Vec<S>, RangeTracker)
where
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &[i64], &[i64], &mut RangeTracker) + Sync + Send,
{
    let (h, w, k, pad) = (spec.h, spec.w, spec.k, spec.pad());
    let (oh, ow) = spec.out_dims();
    let plane = h * w;
    let kk = k * k;
    let results = exec.map_indices(spec.c_out, |i| {
        let mut tracker = RangeTracker::default();
        let mut state = init();
        let mut ks = vec![0i64; oh * ow];
        let mut ws = vec![0i64; oh * ow];
        for c in 0..spec.c_in {
            let x = &feature[c * plane..(c + 1) * plane];
            let wk = &weight[(c * spec.c_out + i) * kk..][..kk];
            let (mut pmin, mut pmax) = (i64::MAX, i64::MIN);
            let (mut smin, mut smax) = (i64::MAX, i64::MIN);
            let (mut wmin, mut wmax) = (i64::MAX, i64::MIN);
            for oy in 0..oh {
                let u_lo = pad.saturating_sub(oy);
                let u_hi = k.min(h + pad - oy);
                for ox in 0..ow {
                    let v_lo = pad.saturating_sub(ox);
                    let v_hi = k.min(w + pad - ox);
                    let (mut s, mut sw) = (0i64, 0i64);
                    for u in u_lo..u_hi {
                        let row = &x[(oy + u - pad) * w..][..w];
                        let wrow = &wk[u * k..][..k];
                        for v in v_lo..v_hi {
                            let wv = wrow[v] as i64;
                            let p = row[ox + v - pad] as i64 * wv;
                            pmin = pmin.min(p);
                            pmax = pmax.max(p);
                            s += p;
                            sw += wv;
                            smin = smin.min(s);
                            smax = smax.max(s);
                            wmin = wmin.min(sw);
                            wmax = wmax.max(sw);
                        }
                    }
                    ks[oy * ow + ox] = s;
                    ws[oy * ow + ox] = sw;
                }
            }
            if pmin <= pmax {
                tracker.observe_range(Site::Product, pmin, pmax);
                tracker.observe_range(Site::KernelSum, smin, smax);
                tracker.observe_range(Site::WeightSum, wmin, wmax);
            }
            per_channel(&mut state, c, &ks, &ws, &mut tracker);
        }
        (state, tracker)
    });
    let mut tracker = RangeTracker::default();
    observe_codes(&mut tracker, Site::FeatureCode, feature);
    observe_codes(&mut tracker, Site::WeightCode, weight);
    let states = results
        .into_iter()
        .map(|(s, t)| {
            tracker.merge(&t);
            s
        })
        .collect();
    (states, tracker)
}

struct QqAccumulators {
    a: Vec<i64>,
    b: Vec<i64>,
    c: Vec<i64>,
    d: Vec<i64>,
}

/// Accumulates `acc[p] += term(p)` and records every partial sum.
fn accumulate(acc: &mut [i64], tracker: &mut RangeTracker, site: Site, term: impl Fn(usize) -> i64) {
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for (p, a) in acc.iter_mut().enumerate() {
        *a += term(p);
        lo = lo.min(*a);
        hi = hi.max(*a);
    }
    if lo <= hi {
        tracker.observe_range(site, lo, hi);
    }
}

fn observe_products(tracker: &mut RangeTracker, site: Site, code: i64, plane: &[i64]) {
    if let (Some(&lo), Some(&hi)) = (plane.iter().min(), plane.iter().max()) {
        let (a, b) = (code * lo, code * hi);
        tracker.observe_range(site, a.min(b), a.max(b));
    }
}

/// The four integer channel sums of the QQ pipeline, audited against `plan`.
pub fn integer_sums(spec: &ConvSpec, codes: ChannelCodes<'_>, plan: &WidthPlan, exec: Exec) -> Result<IntegerSums, ConvError> {
    spec.validate()?;
    check_lengths(spec, codes.feature, codes.weight)?;
    if codes.mu.len() != spec.c_in || codes.sigma.len() != spec.c_in {
        return Err(ConvError::Shape(format!(
            "expected {} channel parameter codes, got {} means and {} sigmas",
            spec.c_in,
            codes.mu.len(),
            codes.sigma.len()
        )));
    }
    let pos = spec.positions();
    let (states, mut tracker) = kernel_pass(
        spec,
        codes.feature,
        codes.weight,
        exec,
        || QqAccumulators { a: vec![0; pos], b: vec![0; pos], c: vec![0; pos], d: vec![0; pos] },
        |acc, c, ks, ws, tracker| {
            let sig = codes.sigma[c] as i64;
            let mu = codes.mu[c] as i64;
            observe_products(tracker, Site::QqProduct, sig, ks);
            observe_products(tracker, Site::QqMuProduct, mu, ws);
            accumulate(&mut acc.a, tracker, Site::QqSigmaSum, |p| sig * ks[p]);
            accumulate(&mut acc.b, tracker, Site::QqKernelSum, |p| ks[p]);
            accumulate(&mut acc.c, tracker, Site::QqMuSum, |p| mu * ws[p]);
            accumulate(&mut acc.d, tracker, Site::QqWeightSum, |p| ws[p]);
        },
    );
    observe_codes(&mut tracker, Site::QqCode, codes.mu);
    observe_codes(&mut tracker, Site::QqCode, codes.sigma);
    let audit = tracker.audit(plan)?;
    let mut out = IntegerSums {
        sigma_sum: Vec::with_capacity(spec.c_out * pos),
        kernel_sum: Vec::with_capacity(spec.c_out * pos),
        mu_sum: Vec::with_capacity(spec.c_out * pos),
        weight_sum: Vec::with_capacity(spec.c_out * pos),
        audit,
    };
    for s in states {
        out.sigma_sum.extend(s.a);
        out.kernel_sum.extend(s.b);
        out.mu_sum.extend(s.c);
        out.weight_sum.extend(s.d);
    }
    Ok(out)
}

pub(crate) fn check_code_lengths(spec: &ConvSpec, feature: &[i32], weight: &[i32]) -> Result<(), ConvError> {
    check_lengths(spec, feature, weight)
}
