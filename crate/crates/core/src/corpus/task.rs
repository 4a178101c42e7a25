use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TEMPLATE_COUNT: usize = 8;

/// Template images plus Gaussian noise, each sample randomly shifted by up to
/// `max_shift` pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTask {
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub noise: f64,
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            classes: 4,
            channels: 1,
            height: 8,
            width: 8,
            train_size: 2048,
            test_size: 512,
            noise: 1.0,
            max_shift: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub pixel_len: usize,
    /// Images back to back, each `channels × height × width` row-major.
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.pixel_len..(i + 1) * self.pixel_len]
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub train: Split,
    pub test: Split,
}

/// Binary pattern of class `class` on an `h × w` grid.
fn template(class: usize, h: usize, w: usize) -> Vec<f64> {
    let (cy, cx) = (h / 2, w / 2);
    let mut img = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let on = match class {
                0 => y + 1 == cy || y == cy,
                1 => x + 1 == cx || x == cx,
                2 => y * w == x * h,
                3 => y * w == (w - 1 - x) * h,
                4 => {
                    let border = y == 1 || y + 2 == h || x == 1 || x + 2 == w;
                    border && (1..h - 1).contains(&y) && (1..w - 1).contains(&x)
                }
                5 => (cy.saturating_sub(1)..=cy).contains(&y) || (cx.saturating_sub(1)..=cx).contains(&x),
                6 => (y / 2 + x / 2) % 2 == 0,
                7 => y < cy && x < cx,
                _ => unreachable!(),
            };
            if on {
                img[y * w + x] = 1.0;
            }
        }
    }
    img
}

fn sample_split<R: Rng>(task: &SyntheticTask, size: usize, templates: &[Vec<f64>], rng: &mut R) -> Split {
    let (c, h, w) = (task.channels, task.height, task.width);
    let pixel_len = c * h * w;
    let mut labels: Vec<usize> = (0..size).map(|i| i % task.classes).collect();
    labels.shuffle(rng);
    let shift = task.max_shift as i64;
    let mut images = Vec::with_capacity(size * pixel_len);
    for &label in &labels {
        let dy = rng.gen_range(-shift..=shift);
        let dx = rng.gen_range(-shift..=shift);
        let t = &templates[label];
        for _ in 0..c {
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let (sy, sx) = (y - dy, x - dx);
                    let base = if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
                        t[(sy * w as i64 + sx) as usize]
                    } else {
                        0.0
                    };
                    let n: f64 = rng.sample(StandardNormal);
                    images.push(base + task.noise * n);
                }
            }
        }
    }
    Split {
        pixel_len,
        images,
        labels,
    }
}

/// Deterministic train/test splits for `task`; every class gets
/// `size / classes` samples (the remainder goes to the lowest classes).
pub fn generate_task(task: &SyntheticTask) -> Result<Dataset> {
    if task.classes < 2 || task.classes > TEMPLATE_COUNT {
        return Err(Error::InvalidParameter(format!(
            "classes must lie in 2..={TEMPLATE_COUNT}, got {}",
            task.classes
        )));
    }
    if task.channels == 0 || task.height < 4 || task.width < 4 {
        return Err(Error::InvalidParameter(format!(
            "image shape {}x{}x{} too small (need channels >= 1, sides >= 4)",
            task.channels, task.height, task.width
        )));
    }
    if task.train_size == 0 || task.test_size == 0 {
        return Err(Error::InvalidParameter("train and test sizes must be >= 1".into()));
    }
    if !task.noise.is_finite() || task.noise < 0.0 {
        return Err(Error::InvalidParameter(format!("noise {} must be >= 0", task.noise)));
    }
    let templates: Vec<Vec<f64>> = (0..task.classes)
        .map(|k| template(k, task.height, task.width))
        .collect();
    let mut rng = crate::rng(task.seed);
    let train = sample_split(task, task.train_size, &templates, &mut rng);
    let test = sample_split(task, task.test_size, &templates, &mut rng);
    Ok(Dataset {
        classes: task.classes,
        train,
        test,
    })
}
