//! Forward and reverse passes through a stack of dense layers, carrying an
//! optional block of tangent directions alongside the activations.
//!
//! With tangent seed `T0` the stack produces `T_L = J(x) T0`, so seeding with
//! the identity yields the input Jacobian. The reverse pass accepts
//! cotangents for both the output and the output tangent, which is what
//! Jacobian-dependent losses need.

use super::{Activation, LayerSpec};
use crate::linalg::Matrix;

pub(crate) struct LayerTrace {
    input: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    tan_in: Option<Matrix>,
    // W * tan_in, before the activation-derivative row scaling.
    wt: Option<Matrix>,
}

pub struct StackTrace {
    layers: Vec<LayerTrace>,
    pub(crate) output: Vec<f64>,
    tangent: Option<Matrix>,
}

impl StackTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// `J(x) * seed`, present when a seed was supplied.
    pub fn tangent(&self) -> Option<&Matrix> {
        self.tangent.as_ref()
    }
}

pub(crate) fn param_len(layers: &[LayerSpec]) -> usize {
    layers.iter().map(LayerSpec::param_count).sum()
}

fn activate(act: Activation, z: f64) -> (f64, f64, f64) {
    match act {
        Activation::Identity => (z, 1.0, 0.0),
        Activation::Tanh => {
            let t = z.tanh();
            let d1 = 1.0 - t * t;
            (t, d1, -2.0 * t * d1)
        }
    }
}

pub(crate) fn forward(
    layers: &[LayerSpec],
    params: &[f64],
    x: &[f64],
    seed: Option<Matrix>,
) -> StackTrace {
    let mut a = x.to_vec();
    let mut tan = seed;
    let mut off = 0;
    let mut traces = Vec::with_capacity(layers.len());
    for spec in layers {
        let (nin, nout) = (spec.in_dim, spec.out_dim);
        let w = &params[off..off + nout * nin];
        let b = &params[off + nout * nin..off + nout * nin + nout];
        off += spec.param_count();

        let mut act = Vec::with_capacity(nout);
        let mut d1 = Vec::with_capacity(nout);
        let mut d2 = Vec::with_capacity(nout);
        for i in 0..nout {
            let row = &w[i * nin..(i + 1) * nin];
            let z = b[i] + row.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
            let (v, g1, g2) = activate(spec.activation, z);
            act.push(v);
            d1.push(g1);
            d2.push(g2);
        }

        let (wt, next_tan) = match tan.as_ref() {
            Some(t) => {
                let p = t.cols();
                let mut wt = vec![0.0; nout * p];
                let td = t.as_slice();
                for i in 0..nout {
                    let orow = &mut wt[i * p..(i + 1) * p];
                    for c in 0..nin {
                        let wic = w[i * nin + c];
                        if wic == 0.0 {
                            continue;
                        }
                        for (o, &tv) in orow.iter_mut().zip(&td[c * p..(c + 1) * p]) {
                            *o += wic * tv;
                        }
                    }
                }
                let mut out = wt.clone();
                for i in 0..nout {
                    for o in &mut out[i * p..(i + 1) * p] {
                        *o *= d1[i];
                    }
                }
                (
                    Some(Matrix::from_raw(nout, p, wt)),
                    Some(Matrix::from_raw(nout, p, out)),
                )
            }
            None => (None, None),
        };

        traces.push(LayerTrace {
            input: a,
            d1,
            d2,
            tan_in: tan.take(),
            wt,
        });
        a = act;
        tan = next_tan;
    }
    StackTrace {
        layers: traces,
        output: a,
        tangent: tan,
    }
}

/// Reverse pass. Accumulates parameter gradients into `grad` (which covers
/// exactly this stack's parameters) and returns the cotangents of the input
/// and of the input tangent seed when `need_input` is set.
pub(crate) fn backward(
    layers: &[LayerSpec],
    params: &[f64],
    trace: &StackTrace,
    d_out: Vec<f64>,
    d_tan: Option<Matrix>,
    grad: &mut [f64],
    need_input: bool,
) -> (Vec<f64>, Option<Matrix>) {
    assert!(
        d_tan.is_none() || trace.tangent.is_some(),
        "tangent cotangent supplied for a pass without tangents"
    );
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for spec in layers {
        offsets.push(off);
        off += spec.param_count();
    }

    let mut ga = d_out;
    let mut gt = d_tan;
    for (l, spec) in layers.iter().enumerate().rev() {
        let (nin, nout) = (spec.in_dim, spec.out_dim);
        let lt = &trace.layers[l];
        let base = offsets[l];
        let w = &params[base..base + nout * nin];
        let propagate = l > 0 || need_input;

        let mut gz: Vec<f64> = ga.iter().zip(&lt.d1).map(|(g, d)| g * d).collect();
        let mut g_tan_in = None;
        if let (Some(gtm), Some(wt), Some(tin)) = (gt.as_ref(), lt.wt.as_ref(), lt.tan_in.as_ref())
        {
            let p = gtm.cols();
            let gtd = gtm.as_slice();
            let wtd = wt.as_slice();
            let tind = tin.as_slice();
            let mut gp = vec![0.0; nout * p];
            for i in 0..nout {
                let grow = &gtd[i * p..(i + 1) * p];
                let wrow = &wtd[i * p..(i + 1) * p];
                let s: f64 = grow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                gz[i] += s * lt.d2[i];
                for (o, &g) in gp[i * p..(i + 1) * p].iter_mut().zip(grow) {
                    *o = g * lt.d1[i];
                }
            }
            let gw = &mut grad[base..base + nout * nin];
            for i in 0..nout {
                let gprow = &gp[i * p..(i + 1) * p];
                for c in 0..nin {
                    let trow = &tind[c * p..(c + 1) * p];
                    gw[i * nin + c] += gprow.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            if propagate {
                let mut gti = vec![0.0; nin * p];
                for i in 0..nout {
                    let gprow = &gp[i * p..(i + 1) * p];
                    for c in 0..nin {
                        let wic = w[i * nin + c];
                        if wic == 0.0 {
                            continue;
                        }
                        for (o, &g) in gti[c * p..(c + 1) * p].iter_mut().zip(gprow) {
                            *o += wic * g;
                        }
                    }
                }
                g_tan_in = Some(Matrix::from_raw(nin, p, gti));
            }
        }

        {
            let (gw, gb) = grad[base..base + nout * nin + nout].split_at_mut(nout * nin);
            for i in 0..nout {
                let g = gz[i];
                if g == 0.0 {
                    continue;
                }
                for (o, &x) in gw[i * nin..(i + 1) * nin].iter_mut().zip(&lt.input) {
                    *o += g * x;
                }
                gb[i] += g;
            }
        }

        if propagate {
            let mut gin = vec![0.0; nin];
            for i in 0..nout {
                let g = gz[i];
                if g == 0.0 {
                    continue;
                }
                for (o, &wv) in gin.iter_mut().zip(&w[i * nin..(i + 1) * nin]) {
                    *o += g * wv;
                }
            }
            ga = gin;
        } else {
            ga = Vec::new();
        }
        gt = g_tan_in;
    }
    (ga, gt)
}
