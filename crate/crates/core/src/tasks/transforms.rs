//! Pixel-level transforms on 28×28 images.
//!
//! Geometry uses pixel-center coordinates with the rotation center at
//! `(13.5, 13.5)`. Out-of-frame samples read as 0 (black).

use crate::dataset::{Image, SIDE};
use crate::linalg::SeededRng;

const CENTER: f64 = (SIDE as f64 - 1.0) / 2.0;

/// Bilinear sample at fractional `(row, col)`; neighbours outside the frame
/// contribute 0.
fn bilinear_zero(img: &Image, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r > (SIDE - 1) as f64 || c > (SIDE - 1) as f64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    let mut acc = 0.0;
    for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
        if wr == 0.0 {
            continue;
        }
        for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
            if wc == 0.0 {
                continue;
            }
            acc += wr * wc * at(r0 + dr, c0 + dc);
        }
    }
    acc
}

/// Exact cosine/sine for multiples of 90°, so quarter turns map the pixel
/// grid onto itself without rounding.
fn cos_sin_degrees(angle: f64) -> (f64, f64) {
    let a = angle.rem_euclid(360.0);
    if a == 0.0 {
        (1.0, 0.0)
    } else if a == 90.0 {
        (0.0, 1.0)
    } else if a == 180.0 {
        (-1.0, 0.0)
    } else if a == 270.0 {
        (0.0, -1.0)
    } else {
        let t = a.to_radians();
        (t.cos(), t.sin())
    }
}

/// Counterclockwise rotation about the image center with bilinear
/// interpolation.
pub fn rotate(img: &Image, angle_degrees: f64) -> Image {
    let (cos, sin) = cos_sin_degrees(angle_degrees);
    Image::from_fn(|r, c| {
        // y axis points up so that positive angles turn counterclockwise on
        // screen.
        let x = c as f64 - CENTER;
        let y = CENTER - r as f64;
        let xs = cos * x + sin * y;
        let ys = -sin * x + cos * y;
        bilinear_zero(img, CENTER - ys, xs + CENTER)
    })
}

/// Rotates every row right by `px` with wrap-around.
pub fn circular_shift(img: &Image, px: usize) -> Image {
    let s = px % SIDE;
    Image::from_fn(|r, c| img.get(r, (c + SIDE - s) % SIDE))
}

pub fn hflip(img: &Image) -> Image {
    Image::from_fn(|r, c| img.get(r, SIDE - 1 - c))
}

pub fn vflip(img: &Image) -> Image {
    Image::from_fn(|r, c| img.get(SIDE - 1 - r, c))
}

pub fn invert(img: &Image) -> Image {
    Image::from_fn(|r, c| 1.0 - img.get(r, c))
}

/// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
fn gaussian_taps(kernel: usize, sigma: f64) -> Vec<f64> {
    let half = (kernel as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..kernel)
        .map(|i| {
            let x = i as f64 - half;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn reflect(i: isize) -> usize {
    let n = SIDE as isize;
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &Image, kernel: usize, sigma: f64) -> Image {
    let taps = gaussian_taps(kernel, sigma);
    let half = (kernel / 2) as isize;
    let mut rows = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            rows[r * SIDE + c] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * img.get(r, reflect(c as isize + k as isize - half)))
                .sum();
        }
    }
    Image::from_fn(|r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, w)| w * rows[reflect(r as isize + k as isize - half) * SIDE + c])
            .sum()
    })
}

/// Solves the 8-parameter homography taking each `from` point to the
/// matching `to` point. Points are `(x, y)` = `(col, row)`.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> [f64; 8] {
    let mut a = [[0.0; 9]; 8];
    for (k, (&(x, y), &(u, v))) in from.iter().zip(to).enumerate() {
        a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    // Gaussian elimination with partial pivoting on the augmented system.
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-12 {
            // Degenerate quad: fall back to the identity map.
            return [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        }
        for j in col..9 {
            a[col][j] /= p;
        }
        for i in 0..8 {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in col..9 {
                        a[i][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    let mut h = [0.0; 8];
    for i in 0..8 {
        h[i] = a[i][8];
    }
    h
}

/// Corner displacement for a perspective warp: each corner moves
/// independently and uniformly inside a square of half-width
/// `scale · SIDE / 2` pixels.
pub fn perspective_corners(scale: f64, rng: &mut SeededRng) -> [(f64, f64); 4] {
    let last = (SIDE - 1) as f64;
    let reach = scale * SIDE as f64 / 2.0;
    let corners = [(0.0, 0.0), (last, 0.0), (last, last), (0.0, last)];
    corners.map(|(x, y)| {
        (
            x + rng.uniform_range(-reach, reach),
            y + rng.uniform_range(-reach, reach),
        )
    })
}

/// Warps the image so its corners land on `moved`, resampling bilinearly.
pub fn perspective_warp(img: &Image, moved: &[(f64, f64); 4]) -> Image {
    let last = (SIDE - 1) as f64;
    let corners = [(0.0, 0.0), (last, 0.0), (last, last), (0.0, last)];
    // Output coordinates map back to source coordinates.
    let h = homography(moved, &corners);
    Image::from_fn(|r, c| {
        let (x, y) = (c as f64, r as f64);
        let w = h[6] * x + h[7] * y + 1.0;
        if w.abs() < 1e-12 {
            return 0.0;
        }
        let sx = (h[0] * x + h[1] * y + h[2]) / w;
        let sy = (h[3] * x + h[4] * y + h[5]) / w;
        bilinear_zero(img, sy, sx)
    })
}

/// Rectangle in pixel units: top row, left column, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.uniform_range(lo.ln(), hi.ln()).exp()
}

/// Picks the erasing rectangle: area fraction in `scale`, aspect ratio
/// (height / width) log-uniform in `ratio`, up to 10 attempts.
pub fn erasing_rect(rng: &mut SeededRng, scale: (f64, f64), ratio: (f64, f64)) -> Option<Rect> {
    let area = (SIDE * SIDE) as f64;
    for _ in 0..10 {
        let target = area * rng.uniform_range(scale.0, scale.1);
        let aspect = log_uniform(rng, ratio.0, ratio.1);
        let h = (target * aspect).sqrt().round() as usize;
        let w = (target / aspect).sqrt().round() as usize;
        if h == 0 || w == 0 || h >= SIDE || w >= SIDE {
            continue;
        }
        let top = rng.below(SIDE - h + 1);
        let left = rng.below(SIDE - w + 1);
        return Some(Rect {
            top,
            left,
            height: h,
            width: w,
        });
    }
    None
}

pub fn erase(img: &Image, rect: Rect) -> Image {
    Image::from_fn(|r, c| {
        let inside = (rect.top..rect.top + rect.height).contains(&r)
            && (rect.left..rect.left + rect.width).contains(&c);
        if inside {
            0.0
        } else {
            img.get(r, c)
        }
    })
}

/// Picks the crop window: area fraction in `scale`, aspect (width / height)
/// log-uniform in `ratio`; falls back to the whole frame after 10 attempts.
pub fn crop_rect(rng: &mut SeededRng, scale: (f64, f64), ratio: (f64, f64)) -> Rect {
    let area = (SIDE * SIDE) as f64;
    for _ in 0..10 {
        let target = area * rng.uniform_range(scale.0, scale.1);
        let aspect = log_uniform(rng, ratio.0, ratio.1);
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= SIDE && h <= SIDE {
            let top = rng.below(SIDE - h + 1);
            let left = rng.below(SIDE - w + 1);
            return Rect {
                top,
                left,
                height: h,
                width: w,
            };
        }
    }
    Rect {
        top: 0,
        left: 0,
        height: SIDE,
        width: SIDE,
    }
}

/// Crops `rect` and rescales it to 28×28 (bilinear, half-pixel centers,
/// edge-clamped).
pub fn resized_crop(img: &Image, rect: Rect) -> Image {
    let sy = rect.height as f64 / SIDE as f64;
    let sx = rect.width as f64 / SIDE as f64;
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
    Image::from_fn(|r, c| {
        let y = clamp((r as f64 + 0.5) * sy - 0.5, rect.height);
        let x = clamp((c as f64 + 0.5) * sx - 0.5, rect.width);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(rect.height - 1), (x0 + 1).min(rect.width - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let p = |yy: usize, xx: usize| img.get(rect.top + yy, rect.left + xx);
        (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1))
            + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digitish(seed: u64) -> Image {
        let mut rng = SeededRng::new(seed);
        Image::from_fn(|r, c| {
            if (6..22).contains(&r) && (8..20).contains(&c) {
                (rng.below(256) as f64) / 255.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = digitish(1);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(rotate(&img, 360.0), img);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = digitish(2);
        let mut out = img.clone();
        for _ in 0..4 {
            out = rotate(&out, 90.0);
        }
        assert_eq!(out, img);
    }

    #[test]
    fn quarter_turn_is_counterclockwise() {
        // A dot on the right edge of the middle row moves to the top.
        let img = Image::from_fn(|r, c| if r == 13 && c == 27 { 1.0 } else { 0.0 });
        let out = rotate(&img, 90.0);
        assert_eq!(out.get(0, 13), 1.0);
    }

    #[test]
    fn rotating_a_constant_keeps_the_interior() {
        let img = Image::filled(0.5);
        for angle in [10.0, 37.0, 90.0, 215.0] {
            let out = rotate(&img, angle);
            for r in 6..22 {
                for c in 6..22 {
                    assert!((out.get(r, c) - 0.5).abs() < 1e-12, "{angle} {r} {c}");
                }
            }
            if angle != 90.0 {
                assert!(out.get(0, 0) < 0.5);
            }
        }
    }

    #[test]
    fn circular_shift_properties() {
        let img = digitish(3);
        assert_eq!(circular_shift(&img, 0), img);
        assert_eq!(circular_shift(&img, 28), img);
        assert_eq!(
            circular_shift(&circular_shift(&img, 1), 1),
            circular_shift(&img, 2)
        );
        let dot = Image::from_fn(|r, c| if r == 3 && c == 27 { 1.0 } else { 0.0 });
        assert_eq!(circular_shift(&dot, 1).get(3, 0), 1.0);
    }

    #[test]
    fn involutions() {
        let img = digitish(4);
        assert_eq!(invert(&invert(&img)), img);
        assert_eq!(hflip(&hflip(&img)), img);
        assert_eq!(vflip(&vflip(&img)), img);
        assert_eq!(invert(&Image::blank()), Image::filled(1.0));
    }

    #[test]
    fn blur_preserves_constants_and_mass_roughly() {
        let out = gaussian_blur(&Image::filled(0.25), 5, 2.0);
        assert!(out.pixels().iter().all(|&v| (v - 0.25).abs() < 1e-12));
        let taps = gaussian_taps(5, 2.0);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(taps[0], taps[4]);
        assert!(taps[2] > taps[1]);
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect(-1), 1);
        assert_eq!(reflect(-2), 2);
        assert_eq!(reflect(28), 26);
        assert_eq!(reflect(29), 25);
    }

    #[test]
    fn perspective_with_fixed_corners_is_identity() {
        let img = digitish(5);
        let last = 27.0;
        let same = [(0.0, 0.0), (last, 0.0), (last, last), (0.0, last)];
        let out = perspective_warp(&img, &same);
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn perspective_corners_stay_in_reach() {
        let mut rng = SeededRng::new(9);
        for _ in 0..100 {
            let moved = perspective_corners(0.5, &mut rng);
            for ((x, y), (x0, y0)) in moved.iter().zip([(0.0, 0.0), (27.0, 0.0), (27.0, 27.0), (0.0, 27.0)]) {
                assert!((x - x0).abs() <= 7.0 && (y - y0).abs() <= 7.0);
            }
        }
    }

    #[test]
    fn erasing_rect_respects_ranges() {
        let mut rng = SeededRng::new(10);
        for _ in 0..500 {
            if let Some(r) = erasing_rect(&mut rng, (0.02, 0.33), (0.3, 3.3)) {
                let frac = (r.height * r.width) as f64 / 784.0;
                // Rounding of the side lengths widens the nominal range.
                assert!(frac > 0.005 && frac < 0.42, "{frac}");
                assert!(r.top + r.height <= SIDE && r.left + r.width <= SIDE);
            }
        }
    }

    #[test]
    fn crop_of_whole_frame_is_identity() {
        let img = digitish(6);
        let out = resized_crop(
            &img,
            Rect {
                top: 0,
                left: 0,
                height: SIDE,
                width: SIDE,
            },
        );
        assert_eq!(out, img);
    }
}
