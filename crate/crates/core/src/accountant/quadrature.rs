//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 20_000;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

/// Integrates `f` over `[a, b]`, starting from `pieces` equal panels and
/// bisecting the panel with the largest error estimate until the total
/// estimate is at most `tol · max(1, |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize, tol: f64) -> Result<f64> {
    let pieces = pieces.max(1);
    let w = (b - a) / pieces as f64;
    let mut panels: Vec<Panel> = (0..pieces)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + w };
            let (val, err) = gk15(&f, lo, hi);
            Panel {
                a: lo,
                b: hi,
                val,
                err,
            }
        })
        .collect();
    // panels too narrow to split further
    let mut frozen_val = 0.0;
    let mut frozen_err = 0.0;
    loop {
        let total: f64 = frozen_val + panels.iter().map(|p| p.val).sum::<f64>();
        let err: f64 = frozen_err + panels.iter().map(|p| p.err).sum::<f64>();
        if !total.is_finite() {
            return Err(Error::QuadratureNonConvergence { lo: a, hi: b });
        }
        if err <= tol * total.abs().max(1.0) {
            return Ok(total);
        }
        let Some((worst, _)) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
        else {
            return Err(Error::QuadratureNonConvergence { lo: a, hi: b });
        };
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b || panels.len() + 2 > MAX_INTERVALS {
            if panels.len() + 2 > MAX_INTERVALS {
                return Err(Error::QuadratureNonConvergence { lo: p.a, hi: p.b });
            }
            frozen_val += p.val;
            frozen_err += p.err;
            continue;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        panels.push(Panel {
            a: p.a,
            b: m,
            val: v1,
            err: e1,
        });
        panels.push(Panel {
            a: m,
            b: p.b,
            val: v2,
            err: e2,
        });
    }
}
