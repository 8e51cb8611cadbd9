//! Straightforward reference implementations used as test oracles.
#![allow(dead_code)]

use uwlf::image::Image;
use uwlf::lightfield::LightField;

/// Bilinear sample written out longhand; `None` outside the image.
pub fn bilinear(img: &Image, y: f64, x: f64) -> Option<[f64; 3]> {
    let (h, w) = (img.height() as f64, img.width() as f64);
    if y < 0.0 || x < 0.0 || y > h - 1.0 || x > w - 1.0 {
        return None;
    }
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let y1 = (y0 + 1).min(img.height() - 1);
    let x1 = (x0 + 1).min(img.width() - 1);
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = img.get(y0, x0, c) + (img.get(y0, x1, c) - img.get(y0, x0, c)) * fx;
        let bottom = img.get(y1, x0, c) + (img.get(y1, x1, c) - img.get(y1, x0, c)) * fx;
        *o = top + (bottom - top) * fy;
    }
    Some(out)
}

/// Mean over channels of the variance of the views' samples at hypothesis `d`.
pub fn naive_cost(lf: &LightField, views: &[(usize, usize)], d: f64, y: usize, x: usize) -> f64 {
    let dims = lf.dims();
    let (vc, uc) = dims.center();
    let samples: Vec<[f64; 3]> = views
        .iter()
        .filter_map(|&(v, u)| {
            let dv = v as f64 - vc as f64;
            let du = u as f64 - uc as f64;
            bilinear(&lf.sai(v, u).unwrap(), y as f64 + dv * d, x as f64 + du * d)
        })
        .collect();
    if samples.len() < 2 {
        return 1e6;
    }
    let n = samples.len() as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let mean = samples.iter().map(|s| s[c]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / n;
        total += var / 3.0;
    }
    total
}

/// Winning hypothesis: lowest cost, then smallest |d|, then smallest d.
pub fn naive_wta(costs: &[f64], hyps: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .total_cmp(&costs[b])
            .then(hyps[a].abs().total_cmp(&hyps[b].abs()))
            .then(hyps[a].total_cmp(&hyps[b]))
    });
    order[0]
}

pub fn naive_psnr(a: &Image, b: &Image) -> f64 {
    let n = a.as_slice().len() as f64;
    let mse = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

/// SSIM on luma with an explicit 2-D Gaussian window at every valid position.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let luma = |img: &Image, y: usize, x: usize| 0.299 * img.get(y, x, 0) + 0.587 * img.get(y, x, 1) + 0.114 * img.get(y, x, 2);
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i] * g[j] / (gs * gs);
                    let (pa, pb) = (luma(a, y + i, x + j), luma(b, y + i, x + j));
                    ma += wt * pa;
                    mb += wt * pb;
                    aa += wt * pa * pa;
                    bb += wt * pb * pb;
                    ab += wt * pa * pb;
                }
            }
            let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Deterministic pseudo-random image in `[0, 1]`.
pub fn noise_image(h: usize, w: usize, seed: u64) -> Image {
    Image::from_fn(h, w, 3, |y, x, c| uwlf::hash::unit(seed, &[y as u64, x as u64, c as u64]))
}
