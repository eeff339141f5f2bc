//! Synthetic micro-scenes: a per-class global layout with small glyphs
//! scattered on top. Classes in an ambiguous pair share the layout and the
//! glyph colors and differ only in glyph shapes.

use lsdhm_core::{LabeledDataset, Rect, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HarnessError, Result};

pub const GLYPH_H: usize = 7;
pub const GLYPH_W: usize = 5;

/// 5x7 bitmaps, `#` = ink.
const GLYPH_BANK: [[&str; GLYPH_H]; 20] = [
    ["..#..", ".###.", "#####", "..#..", "..#..", "..#..", "..#.."],
    ["#...#", ".#.#.", "..#..", "..#..", "..#..", ".#.#.", "#...#"],
    ["#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"],
    ["..#..", ".#.#.", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    ["....#", "....#", "....#", "....#", "....#", "....#", "#####"],
    ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    ["..#..", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"],
    ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"],
    ["#...#", "#...#", "#...#", "#..##", "#.#.#", "##..#", "#...#"],
    ["#.#.#", ".#.#.", "#.#.#", ".#.#.", "#.#.#", ".#.#.", "#.#.#"],
    ["##.##", "##.##", ".....", "##.##", "##.##", ".....", "##.##"],
    ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
    ["#####", "#....", ".#...", "..#..", "...#.", "....#", "#####"],
    ["..#..", "..#..", "#####", "..#..", "..#..", ".....", "....."],
    [".....", ".....", "..#..", "..#..", "#####", "..#..", "..#.."],
    ["#####", "#####", "#####", ".....", ".....", ".....", "....."],
    [".....", ".....", ".....", ".....", "#####", "#####", "#####"],
    ["#....", ".#...", "..#..", "...#.", "....#", "....#", "....#"],
    ["....#", "...#.", "..#..", ".#...", "#....", "#....", "#...."],
];

const PALETTE: [[f64; 3]; 8] = [
    [0.95, 0.15, 0.1],
    [0.1, 0.85, 0.2],
    [0.15, 0.25, 0.95],
    [0.95, 0.9, 0.1],
    [0.9, 0.2, 0.85],
    [0.1, 0.9, 0.9],
    [1.0, 1.0, 1.0],
    [0.05, 0.05, 0.05],
];

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub bitmap: [[bool; GLYPH_W]; GLYPH_H],
    pub color: [f64; 3],
}

impl Glyph {
    fn from_bank(index: usize, color: [f64; 3]) -> Self {
        let mut bitmap = [[false; GLYPH_W]; GLYPH_H];
        for (r, row) in GLYPH_BANK[index % GLYPH_BANK.len()].iter().enumerate() {
            for (c, ch) in row.bytes().enumerate() {
                bitmap[r][c] = ch == b'#';
            }
        }
        Self { bitmap, color }
    }
}

/// Background gradient plus one flat-colored region.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutTemplate {
    /// Gradient direction in radians.
    pub angle: f64,
    pub from: [f64; 3],
    pub to: [f64; 3],
    /// Region as fractions of the image `(top, left, bottom, right)`.
    pub region: [f64; 4],
    pub region_color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroSceneSpec {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    /// Layout index per class.
    pub class_layout: Vec<usize>,
    pub layouts: Vec<LayoutTemplate>,
    /// Glyph set per class.
    pub glyphs: Vec<Vec<Glyph>>,
    pub ambiguous_pairs: Vec<(usize, usize)>,
    pub min_glyphs: usize,
    pub max_glyphs: usize,
    /// Scales every nuisance: pixel noise, brightness and color jitter,
    /// and the layout shift.
    pub noise: f64,
    pub seed: u64,
}

fn layout_bank(seed: u64, n: usize) -> Vec<LayoutTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_796f);
    let regions = [
        [0.0, 0.0, 0.35, 1.0],
        [0.65, 0.0, 1.0, 1.0],
        [0.0, 0.0, 1.0, 0.35],
        [0.0, 0.65, 1.0, 1.0],
        [0.3, 0.3, 0.7, 0.7],
        [0.0, 0.0, 0.5, 0.5],
        [0.5, 0.5, 1.0, 1.0],
        [0.4, 0.0, 0.6, 1.0],
    ];
    (0..n)
        .map(|i| {
            let mut color = || [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            let from = color();
            let to = color();
            let region_color = color();
            LayoutTemplate {
                angle: std::f64::consts::TAU * i as f64 / n as f64 + rng.random_range(-0.2..0.2),
                from,
                to,
                region: regions[i % regions.len()],
                region_color,
            }
        })
        .collect()
}

impl MicroSceneSpec {
    /// Default scene family: the first `2 * pairs` classes form ambiguous
    /// pairs `(0, 1), (2, 3), ...`; the rest are singletons with their own
    /// layout. Each class draws two glyph shapes; paired classes reuse the
    /// glyph colors of their partner.
    pub fn standard(num_classes: usize, pairs: usize, noise: f64, seed: u64) -> Result<Self> {
        if 2 * pairs > num_classes {
            return Err(HarnessError::Config(format!(
                "{pairs} ambiguous pairs need at least {} classes",
                2 * pairs
            )));
        }
        let n_layouts = num_classes - pairs;
        let mut class_layout = Vec::with_capacity(num_classes);
        let mut glyphs = Vec::with_capacity(num_classes);
        let mut shape = 0;
        let mut layout = 0;
        let mut ambiguous_pairs = Vec::new();
        let palette = |i: usize| PALETTE[i % PALETTE.len()];
        for p in 0..pairs {
            let colors = [palette(2 * p), palette(2 * p + 1)];
            for _ in 0..2 {
                class_layout.push(layout);
                glyphs.push(vec![Glyph::from_bank(shape, colors[0]), Glyph::from_bank(shape + 1, colors[1])]);
                shape += 2;
            }
            ambiguous_pairs.push((2 * p, 2 * p + 1));
            layout += 1;
        }
        for c in 2 * pairs..num_classes {
            class_layout.push(layout);
            glyphs.push(vec![
                Glyph::from_bank(shape, palette(2 * c)),
                Glyph::from_bank(shape + 1, palette(2 * c + 1)),
            ]);
            shape += 2;
            layout += 1;
        }
        let spec = Self {
            num_classes,
            height: 32,
            width: 32,
            class_layout,
            layouts: layout_bank(seed, n_layouts),
            glyphs,
            ambiguous_pairs,
            min_glyphs: 2,
            max_glyphs: 4,
            noise,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.num_classes == 0 {
            return bad("scene spec needs at least one class".into());
        }
        if self.height < GLYPH_H + 2 || self.width < GLYPH_W + 2 {
            return bad(format!("{}x{} images are too small for glyphs", self.height, self.width));
        }
        if self.class_layout.len() != self.num_classes || self.glyphs.len() != self.num_classes {
            return bad("layout and glyph sets must be given for every class".into());
        }
        if let Some(&l) = self.class_layout.iter().find(|&&l| l >= self.layouts.len()) {
            return bad(format!("layout index {l} out of range"));
        }
        if self.min_glyphs > self.max_glyphs {
            return bad("min_glyphs exceeds max_glyphs".into());
        }
        if self.max_glyphs > 0 && self.glyphs.iter().any(|g| g.is_empty()) {
            return bad("a class without glyph shapes cannot place glyphs".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad("noise must be finite and non-negative".into());
        }
        for &(a, b) in &self.ambiguous_pairs {
            if a >= self.num_classes || b >= self.num_classes || a == b {
                return bad(format!("ambiguous pair ({a}, {b}) is invalid"));
            }
            if self.class_layout[a] != self.class_layout[b] {
                return bad(format!("ambiguous pair ({a}, {b}) does not share a layout"));
            }
        }
        Ok(())
    }
}

/// Where glyphs were drawn in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub label: usize,
    pub glyph_boxes: Vec<Rect>,
}

#[derive(Debug, Clone)]
pub struct SceneSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_meta: Vec<SceneMeta>,
    pub test_meta: Vec<SceneMeta>,
}

fn render(spec: &MicroSceneSpec, label: usize, rng: &mut ChaCha8Rng) -> (Tensor3, SceneMeta) {
    let (h, w) = (spec.height, spec.width);
    let layout = &spec.layouts[spec.class_layout[label]];
    let noise = spec.noise;
    let max_shift = (noise * 25.0).ceil().min(4.0) as i64;
    let shift_h = if max_shift > 0 { rng.random_range(-max_shift..=max_shift) } else { 0 };
    let shift_w = if max_shift > 0 { rng.random_range(-max_shift..=max_shift) } else { 0 };
    let brightness = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
    let angle = layout.angle + if noise > 0.0 { rng.random_range(-2.0 * noise..2.0 * noise) } else { 0.0 };
    let (ca, sa) = (angle.cos(), angle.sin());

    let mut data = vec![0.0; h * w * 3];
    let r0 = ((layout.region[0] * h as f64) as i64 + shift_h).clamp(0, h as i64) as usize;
    let c0 = ((layout.region[1] * w as f64) as i64 + shift_w).clamp(0, w as i64) as usize;
    let r1 = ((layout.region[2] * h as f64) as i64 + shift_h).clamp(0, h as i64) as usize;
    let c1 = ((layout.region[3] * w as f64) as i64 + shift_w).clamp(0, w as i64) as usize;
    for y in 0..h {
        for x in 0..w {
            let u = (y as f64 / (h - 1) as f64 - 0.5) * sa + (x as f64 / (w - 1) as f64 - 0.5) * ca;
            let t = (u + 0.71) / 1.42;
            let px = &mut data[(y * w + x) * 3..][..3];
            for ch in 0..3 {
                px[ch] = if (r0..r1).contains(&y) && (c0..c1).contains(&x) {
                    layout.region_color[ch]
                } else {
                    layout.from[ch] * (1.0 - t) + layout.to[ch] * t
                };
            }
        }
    }

    let count = if spec.max_glyphs > 0 {
        rng.random_range(spec.min_glyphs..=spec.max_glyphs)
    } else {
        0
    };
    let mut boxes: Vec<Rect> = Vec::new();
    let set = &spec.glyphs[label];
    for _ in 0..count {
        let glyph = &set[rng.random_range(0..set.len())];
        // Rejection-sample a spot that keeps a 1-pixel gap to earlier glyphs.
        for _ in 0..100 {
            let top = rng.random_range(0..=h - GLYPH_H);
            let left = rng.random_range(0..=w - GLYPH_W);
            let rect = Rect::new(top, left, top + GLYPH_H, left + GLYPH_W);
            if boxes.iter().any(|b| b.dilate(1, h, w).intersects(&rect)) {
                continue;
            }
            for (r, row) in glyph.bitmap.iter().enumerate() {
                for (c, &ink) in row.iter().enumerate() {
                    if ink {
                        let px = &mut data[((top + r) * w + left + c) * 3..][..3];
                        px.copy_from_slice(&glyph.color);
                    }
                }
            }
            boxes.push(rect);
            break;
        }
    }

    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("valid normal");
        for v in data.iter_mut() {
            *v = (*v + brightness + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    (
        Tensor3::new(h, w, 3, data).expect("consistent shape"),
        SceneMeta {
            label,
            glyph_boxes: boxes,
        },
    )
}

/// Generates `n_per_class` images per class and splits each class 80/20
/// into train and test (at least one test image per class).
pub fn generate_dataset(spec: &MicroSceneSpec, n_per_class: usize) -> Result<SceneSplit> {
    spec.validate()?;
    if n_per_class < 2 {
        return Err(HarnessError::Config("need at least 2 images per class".into()));
    }
    let n_test = ((n_per_class as f64 * 0.2).round() as usize).clamp(1, n_per_class - 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_meta = Vec::new();
    let mut test_meta = Vec::new();
    for label in 0..spec.num_classes {
        // One stream per class keeps classes independent of each other.
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(label as u64 + 1);
        for i in 0..n_per_class {
            let (img, meta) = render(spec, label, &mut rng);
            if i < n_per_class - n_test {
                train.push((img, label));
                train_meta.push(meta);
            } else {
                test.push((img, label));
                test_meta.push(meta);
            }
        }
    }
    Ok(SceneSplit {
        train: LabeledDataset::new(train, spec.num_classes)?,
        test: LabeledDataset::new(test, spec.num_classes)?,
        train_meta,
        test_meta,
    })
}

/// Pixelwise mean image of one class.
pub fn class_mean_image(data: &LabeledDataset, label: usize) -> Option<Vec<f64>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut n = 0;
    for (img, l) in data.items() {
        if *l != label {
            continue;
        }
        let s = sum.get_or_insert_with(|| vec![0.0; img.len()]);
        for (a, b) in s.iter_mut().zip(img.data()) {
            *a += b;
        }
        n += 1;
    }
    sum.map(|mut s| {
        s.iter_mut().for_each(|v| *v /= n as f64);
        s
    })
}
