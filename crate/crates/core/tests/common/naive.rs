//! Straightforward per-voxel descriptor references.
//!
//! Every plane is walked in its own (u, v) coordinates with the third axis
//! fixed: XY is (x, y) at fixed t, XT is (x, t) at fixed y, YT is (y, t) at
//! fixed x.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::ops::Range;

use mespot::descriptors::Block;
use mespot::volume::VolumeView;

const ONE: i64 = 1 << 16;

struct PlaneWalk {
    u: Range<usize>,
    v: Range<usize>,
    fixed: Range<usize>,
    plane: usize,
}

fn walks(block: &Block, margin: usize) -> Vec<PlaneWalk> {
    let shrink = |r: &Range<usize>| r.start + margin..r.end.saturating_sub(margin).max(r.start + margin);
    vec![
        PlaneWalk {
            u: shrink(&block.x),
            v: shrink(&block.y),
            fixed: block.t.clone(),
            plane: 0,
        },
        PlaneWalk {
            u: shrink(&block.x),
            v: shrink(&block.t),
            fixed: block.y.clone(),
            plane: 1,
        },
        PlaneWalk {
            u: shrink(&block.y),
            v: shrink(&block.t),
            fixed: block.x.clone(),
            plane: 2,
        },
    ]
}

fn at(view: &VolumeView<'_>, plane: usize, fixed: usize, u: i64, v: i64) -> i64 {
    let (u, v) = (u as usize, v as usize);
    let (t, y, x) = match plane {
        0 => (fixed, v, u),
        1 => (v, fixed, u),
        _ => (v, u, fixed),
    };
    view.get(t, y, x) as i64
}

/// Neighbour `p` compared in fixed point: offsets rounded to 1/65536 per axis,
/// bilinear weights as exact integer products.
/// A voxel in plane coordinates.
#[derive(Clone, Copy)]
pub struct Pixel {
    pub plane: usize,
    pub fixed: usize,
    pub u: usize,
    pub v: usize,
}

fn neighbour_fixed(view: &VolumeView<'_>, px: Pixel, p: usize, n: usize, r: usize) -> i64 {
    let Pixel { plane, fixed, u, v } = px;
    let theta = 2.0 * PI * p as f64 / n as f64;
    let pu = u as i64 * ONE + (r as f64 * theta.cos() * ONE as f64).round() as i64;
    let pv = v as i64 * ONE + (-(r as f64) * theta.sin() * ONE as f64).round() as i64;
    let (u0, fu) = (pu.div_euclid(ONE), pu.rem_euclid(ONE));
    let (v0, fv) = (pv.div_euclid(ONE), pv.rem_euclid(ONE));
    let mut sum = 0;
    for (du, wu) in [(0, ONE - fu), (1, fu)] {
        for (dv, wv) in [(0, ONE - fv), (1, fv)] {
            if wu * wv != 0 {
                sum += at(view, plane, fixed, u0 + du, v0 + dv) * wu * wv;
            }
        }
    }
    sum
}

/// The same neighbour in plain floating point.
pub fn neighbour_float(view: &VolumeView<'_>, px: Pixel, p: usize, n: usize, r: usize) -> f64 {
    let Pixel { plane, fixed, u, v } = px;
    let theta = 2.0 * PI * p as f64 / n as f64;
    let pu = u as f64 + r as f64 * theta.cos();
    let pv = v as f64 - r as f64 * theta.sin();
    let (u0, v0) = (pu.floor(), pv.floor());
    let (a, b) = (pu - u0, pv - v0);
    let g = |du: i64, dv: i64| {
        if (du == 1 && a == 0.0) || (dv == 1 && b == 0.0) {
            0.0
        } else {
            at(view, plane, fixed, u0 as i64 + du, v0 as i64 + dv) as f64
        }
    };
    g(0, 0) * (1.0 - a) * (1.0 - b) + g(1, 0) * a * (1.0 - b) + g(0, 1) * (1.0 - a) * b + g(1, 1) * a * b
}

pub fn lbp_top(view: &VolumeView<'_>, block: &Block, n: usize, r: usize) -> Vec<u32> {
    let codes = 1usize << n;
    let mut hist = vec![0u32; 3 * codes];
    for w in walks(block, r) {
        for f in w.fixed.clone() {
            for v in w.v.clone() {
                for u in w.u.clone() {
                    let c = at(view, w.plane, f, u as i64, v as i64);
                    let mut code = 0;
                    for p in 0..n {
                        if neighbour_fixed(
                            view,
                            Pixel {
                                plane: w.plane,
                                fixed: f,
                                u,
                                v,
                            },
                            p,
                            n,
                            r,
                        ) >= c * ONE * ONE
                        {
                            code |= 1 << p;
                        }
                    }
                    hist[w.plane * codes + code] += 1;
                }
            }
        }
    }
    hist
}

/// Voxels per plane that receive an LBP code.
pub fn lbp_interior_counts(block: &Block, r: usize) -> [usize; 3] {
    let ws = walks(block, r);
    [0, 1, 2].map(|i| ws[i].u.len() * ws[i].v.len() * ws[i].fixed.len())
}

/// Fraction of sampled neighbours where float and fixed-point comparisons
/// disagree while the float value is not within `tol` of the centre.
pub fn lbp_float_disagreements(view: &VolumeView<'_>, block: &Block, n: usize, r: usize, tol: f64) -> usize {
    let mut bad = 0;
    for w in walks(block, r) {
        for f in w.fixed.clone() {
            for v in w.v.clone() {
                for u in w.u.clone() {
                    let c = at(view, w.plane, f, u as i64, v as i64);
                    for p in 0..n {
                        let fl = neighbour_float(
                            view,
                            Pixel {
                                plane: w.plane,
                                fixed: f,
                                u,
                                v,
                            },
                            p,
                            n,
                            r,
                        );
                        let fixed = neighbour_fixed(
                            view,
                            Pixel {
                                plane: w.plane,
                                fixed: f,
                                u,
                                v,
                            },
                            p,
                            n,
                            r,
                        ) >= c * ONE * ONE;
                        if (fl - c as f64).abs() > tol && (fl >= c as f64) != fixed {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    bad
}

/// Orientation histograms; `weighted` selects magnitude votes (HOG) over unit votes (HIGO).
pub fn gradient_top(view: &VolumeView<'_>, block: &Block, nbins: usize, weighted: bool) -> Vec<f64> {
    let mut hist = vec![0.0; 3 * nbins];
    for w in walks(block, 1) {
        for f in w.fixed.clone() {
            for v in w.v.clone() {
                for u in w.u.clone() {
                    let (u, v) = (u as i64, v as i64);
                    let gu = at(view, w.plane, f, u + 1, v) - at(view, w.plane, f, u - 1, v);
                    let gv = at(view, w.plane, f, u, v + 1) - at(view, w.plane, f, u, v - 1);
                    if gu == 0 && gv == 0 {
                        continue;
                    }
                    let mut theta = (gv as f64).atan2(gu as f64);
                    if theta < 0.0 {
                        theta += PI;
                    }
                    if theta >= PI {
                        theta -= PI;
                    }
                    let bin = ((theta * nbins as f64 / PI) as usize).min(nbins - 1);
                    hist[w.plane * nbins + bin] += if weighted {
                        ((gu * gu + gv * gv) as f64).sqrt()
                    } else {
                        1.0
                    };
                }
            }
        }
    }
    hist
}
