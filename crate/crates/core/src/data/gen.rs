//! Procedural renderers for the three synthetic tasks.
//!
//! Every image is produced from its own derived seed, so generation order
//! and parallelism cannot change pixel content. All geometry scales with the
//! image side so the same tasks exist at any supported size.

use rand::Rng;
use rayon::prelude::*;

use super::{quantize255, Sample, SourceSpec, StyleParams, TaskId, TaskSpec};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, next_gaussian, rng_from};

/// Renders one image of `class` under the given task and source style.
pub fn render_image(spec: &TaskSpec, source: &SourceSpec, class: usize, seed: u64) -> Tensor<f32> {
    let s = spec.image_size;
    let st = &source.style;
    let mut rng = rng_from(seed);

    let mut canvas = vec![0.0f64; 3 * s * s];

    paint_background(&mut canvas, s, st, &mut rng);
    match spec.task {
        TaskId::Easy => paint_easy(&mut canvas, s, st, class, &mut rng),
        TaskId::Medium => paint_medium(&mut canvas, s, st, class, &mut rng),
        TaskId::Hard => paint_hard(&mut canvas, s, st, class, &mut rng),
    }
    paint_clutter(&mut canvas, s, st, &mut rng);
    for v in canvas.iter_mut() {
        *v += st.noise_level * next_gaussian(&mut rng);
    }

    let data: Vec<f32> = canvas.iter().map(|&v| v as f32).collect();
    let raw = Tensor::new(vec![3, s, s], data).expect("canvas length fixed");
    quantize255(&raw)
}

/// Generates `per_class` images per class, class 0 first.
pub fn generate_dataset(
    spec: &TaskSpec,
    source: &SourceSpec,
    per_class: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if per_class == 0 {
        return Err(Error::EmptyClass(format!(
            "generation of task {} requested zero images per class",
            spec.task
        )));
    }
    let jobs: Vec<(usize, usize)> = (0..2usize)
        .flat_map(|class| (0..per_class).map(move |idx| (class, idx)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(class, idx)| {
            let img_seed = derive_seed(
                seed,
                &[
                    "image",
                    spec.task.as_str(),
                    source.source.as_str(),
                    spec.task.class_names()[class],
                    &idx.to_string(),
                ],
            );
            Sample {
                image: render_image(spec, source, class, img_seed),
                label: class,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Painting helpers. Canvas is [3 * s * s] f64, channel-major.
// ---------------------------------------------------------------------------

fn idx(c: usize, y: usize, x: usize, s: usize) -> usize {
    (c * s + y) * s + x
}

/// Bilinear value noise in `[0, 1]` with lattice cell size `cell` pixels.
fn value_noise(s: usize, cell: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = (s as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
    let mut field = vec![0.0; s * s];
    for y in 0..s {
        for x in 0..s {
            let gy = y as f64 / cell;
            let gx = x as f64 / cell;
            let iy = gy as usize;
            let ix = gx as usize;
            let fy = smoothstep(gy - iy as f64);
            let fx = smoothstep(gx - ix as f64);
            let v00 = lattice[iy * n + ix];
            let v01 = lattice[iy * n + ix + 1];
            let v10 = lattice[(iy + 1) * n + ix];
            let v11 = lattice[(iy + 1) * n + ix + 1];
            let top = v00 + (v01 - v00) * fx;
            let bot = v10 + (v11 - v10) * fx;
            field[y * s + x] = top + (bot - top) * fy;
        }
    }
    field
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn paint_background(canvas: &mut [f64], s: usize, st: &StyleParams, rng: &mut impl Rng) {
    let tex = value_noise(s, (s as f64 / 4.0).max(2.0), rng);
    let tint: [f64; 3] = std::array::from_fn(|_| st.color_jitter * 0.4 * (rng.gen::<f64>() - 0.5));
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                let v = st.background_level
                    + st.background_texture * 2.0 * (tex[y * s + x] - 0.5)
                    + tint[c];
                canvas[idx(c, y, x, s)] = v;
            }
        }
    }
}

/// Foreground fill and outline colors contrasting with the background.
fn fg_colors(st: &StyleParams, rng: &mut impl Rng) -> ([f64; 3], f64) {
    let bright = st.background_level < 0.5;
    let base = if bright { 0.82 } else { 0.18 };
    let fill: [f64; 3] =
        std::array::from_fn(|_| base + st.color_jitter * 0.6 * (rng.gen::<f64>() - 0.5));
    let outline = if bright { 0.05 } else { 0.95 };
    (fill, outline)
}

/// Alpha-blends `cov` of `color` over the canvas at one pixel.
fn blend(canvas: &mut [f64], c: usize, y: usize, x: usize, s: usize, color: f64, cov: f64) {
    let at = idx(c, y, x, s);
    canvas[at] = canvas[at] * (1.0 - cov) + color * cov;
}

/// Circle (class 0) versus square (class 1) of comparable area.
fn paint_easy(canvas: &mut [f64], s: usize, st: &StyleParams, class: usize, rng: &mut impl Rng) {
    let sf = s as f64;
    let r = sf * (0.20 + 0.10 * rng.gen::<f64>());
    let cx = sf * (0.5 + 0.16 * (rng.gen::<f64>() - 0.5));
    let cy = sf * (0.5 + 0.16 * (rng.gen::<f64>() - 0.5));
    let (fill, outline) = fg_colors(st, rng);
    let stroke = st.stroke_scale * (sf / 32.0).max(0.75);

    for y in 0..s {
        for x in 0..s {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            // Signed distance to the shape boundary, negative inside.
            let d = if class == 0 {
                (dx * dx + dy * dy).sqrt() - r
            } else {
                dx.abs().max(dy.abs()) - r * 0.886
            };
            let cov = (0.5 - d).clamp(0.0, 1.0);
            let ring = (stroke * 0.5 + 0.5 - d.abs()).clamp(0.0, 1.0);
            for (c, &fc) in fill.iter().enumerate() {
                blend(canvas, c, y, x, s, fc, cov);
                blend(canvas, c, y, x, s, outline, ring);
            }
        }
    }
}

/// Irregular blob (class 0) versus the same blob family with a protruding
/// tail (class 1).
fn paint_medium(canvas: &mut [f64], s: usize, st: &StyleParams, class: usize, rng: &mut impl Rng) {
    let sf = s as f64;
    let r0 = sf * (0.18 + 0.06 * rng.gen::<f64>());
    let cx = sf * (0.5 + 0.12 * (rng.gen::<f64>() - 0.5));
    let cy = sf * (0.5 + 0.12 * (rng.gen::<f64>() - 0.5));
    let amps: [f64; 3] = std::array::from_fn(|_| 0.10 * rng.gen::<f64>());
    let phases: [f64; 3] = std::array::from_fn(|_| std::f64::consts::TAU * rng.gen::<f64>());
    // Tail parameters are always drawn so both classes consume the same
    // stream; only class 1 paints the tail.
    let tail_angle = std::f64::consts::TAU * rng.gen::<f64>();
    let tail_len = r0 * (1.0 + 0.5 * rng.gen::<f64>());
    let tail_width = r0 * (0.30 + 0.10 * rng.gen::<f64>());
    let (fill, outline) = fg_colors(st, rng);
    let stroke = st.stroke_scale * (sf / 32.0).max(0.75);

    let boundary = |theta: f64| -> f64 {
        let mut r = 1.0;
        for (k, (a, p)) in amps.iter().zip(&phases).enumerate() {
            r += a * ((k as f64 + 2.0) * theta + p).cos();
        }
        r0 * r
    };
    let t0x = cx + boundary(tail_angle) * tail_angle.cos();
    let t0y = cy + boundary(tail_angle) * tail_angle.sin();
    let t1x = cx + (boundary(tail_angle) + tail_len) * tail_angle.cos();
    let t1y = cy + (boundary(tail_angle) + tail_len) * tail_angle.sin();

    for y in 0..s {
        for x in 0..s {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let dx = px - cx;
            let dy = py - cy;
            let rho = (dx * dx + dy * dy).sqrt();
            let theta = dy.atan2(dx);
            let d_blob = rho - boundary(theta);
            let mut d = d_blob;
            if class == 1 {
                let d_tail = segment_distance(px, py, t0x, t0y, t1x, t1y) - tail_width * 0.5;
                d = d.min(d_tail);
            }
            let cov = (0.5 - d).clamp(0.0, 1.0);
            let ring = (stroke * 0.5 + 0.5 - d.abs()).clamp(0.0, 1.0);
            for (c, &fc) in fill.iter().enumerate() {
                blend(canvas, c, y, x, s, fc, cov);
                blend(canvas, c, y, x, s, outline, ring);
            }
        }
    }
}

fn segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let abx = bx - ax;
    let aby = by - ay;
    let apx = px - ax;
    let apy = py - ay;
    let t = ((apx * abx + apy * aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
    let ex = ax + t * abx - px;
    let ey = ay + t * aby - py;
    (ex * ex + ey * ey).sqrt()
}

/// Coarse-grained (class 0) versus fine-grained (class 1) texture, with
/// overlapping correlation-length ranges so the classes are separable only
/// statistically.
fn paint_hard(canvas: &mut [f64], s: usize, st: &StyleParams, class: usize, rng: &mut impl Rng) {
    let sf = s as f64;
    let cell = if class == 0 {
        sf * (0.16 + 0.14 * rng.gen::<f64>())
    } else {
        sf * (0.09 + 0.10 * rng.gen::<f64>())
    };
    let octave1 = value_noise(s, cell.max(1.5), rng);
    let octave2 = value_noise(s, (cell / 2.0).max(1.5), rng);
    let tint: [f64; 3] = std::array::from_fn(|_| st.color_jitter * 0.5 * (rng.gen::<f64>() - 0.5));

    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                let f = 0.65 * octave1[y * s + x] + 0.35 * octave2[y * s + x];
                let g = 0.5 + (f - 0.5) * 1.6;
                let v = 0.25 * st.background_level + 0.75 * g + tint[c];
                blend(canvas, c, y, x, s, v, 0.85);
            }
        }
    }
}

fn paint_clutter(canvas: &mut [f64], s: usize, st: &StyleParams, rng: &mut impl Rng) {
    let sf = s as f64;
    let count = (st.clutter_density * sf / 32.0).round() as usize;
    for _ in 0..count {
        let cx = sf * rng.gen::<f64>();
        let cy = sf * rng.gen::<f64>();
        let r = sf * (0.02 + 0.02 * rng.gen::<f64>());
        let color = if rng.gen::<f64>() < 0.5 { 0.04 } else { 0.96 };
        let y0 = ((cy - r - 1.0).floor().max(0.0)) as usize;
        let y1 = ((cy + r + 1.0).ceil().min(sf - 1.0)) as usize;
        let x0 = ((cx - r - 1.0).floor().max(0.0)) as usize;
        let x1 = ((cx + r + 1.0).ceil().min(sf - 1.0)) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let d = (dx * dx + dy * dy).sqrt() - r;
                let cov = (0.5 - d).clamp(0.0, 1.0) * 0.9;
                for c in 0..3 {
                    blend(canvas, c, y, x, s, color, cov);
                }
            }
        }
    }
}
