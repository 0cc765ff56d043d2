//! Dataset construction and image file I/O: MNIST-style IDX reading and
//! writing, procedural face and digit generators, corruption of faces by
//! digit overlays, and binary PGM (P5) output including montages.
//!
//! The face generator stands in for a licensed face database: jittered
//! elliptical heads with eye blobs and a mouth arc over mild smooth noise.
//! The digit generator is a seven-segment-style renderer used when no real
//! MNIST files are supplied.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::rbm::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aspect {
    Face,
    Digit,
    Mixed,
}

impl Aspect {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aspect::Face => "face",
            Aspect::Digit => "digit",
            Aspect::Mixed => "mixed",
        }
    }
}

/// Source rows of one mixed image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub face: usize,
    pub digit: usize,
}

/// Batch of flattened images in [0,1] with per-row aspect tags. Mixed sets
/// also carry the pairing back to their source rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub images: Matrix,
    pub height: usize,
    pub width: usize,
    pub aspects: Vec<Aspect>,
    pub pair_index: Option<Vec<PairIndex>>,
    pub labels: Option<Vec<u8>>,
}

impl ImageSet {
    pub fn new_uniform(images: Matrix, height: usize, width: usize, aspect: Aspect) -> Result<Self> {
        let n = images.rows();
        let set = Self {
            images,
            height,
            width,
            aspects: vec![aspect; n],
            pair_index: None,
            labels: None,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The single aspect of the set, or None if rows are tagged differently.
    pub fn uniform_aspect(&self) -> Option<Aspect> {
        let first = *self.aspects.first()?;
        self.aspects.iter().all(|&a| a == first).then_some(first)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.cols() != self.height * self.width {
            return Err(Error::Format(format!(
                "{} pixels per row but dimensions are {}x{}",
                self.images.cols(),
                self.height,
                self.width
            )));
        }
        if self.aspects.len() != self.len() {
            return Err(Error::Format("aspect tag count does not match rows".into()));
        }
        if let Some(i) = self
            .images
            .data()
            .iter()
            .position(|&x| !(0.0..=1.0).contains(&x))
        {
            return Err(Error::Domain(format!(
                "pixel {} outside [0,1]: {}",
                i,
                self.images.data()[i]
            )));
        }
        let all_mixed = !self.is_empty() && self.aspects.iter().all(|&a| a == Aspect::Mixed);
        match (&self.pair_index, all_mixed) {
            (Some(pairs), true) if pairs.len() == self.len() => {}
            (None, false) => {}
            (None, true) => return Err(Error::Pairing("mixed set without pair indices".into())),
            (Some(_), false) => {
                return Err(Error::Pairing("pair indices on a non-mixed set".into()))
            }
            (Some(_), true) => {
                return Err(Error::Pairing("pair index count does not match rows".into()))
            }
        }
        Ok(())
    }
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], pos: usize) -> Result<u32> {
    if pos + 4 > bytes.len() {
        return Err(Error::Truncated {
            expected: pos + 4,
            actual: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()))
}

/// Read an IDX image file (big-endian, magic 2051, dims N x H x W), with an
/// optional label file (magic 2049). Pixels are scaled from [0,255] to
/// [0,1]; rows are tagged `digit`.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<ImageSet> {
    let bytes = fs::read(images_path)?;
    let magic = be_u32(&bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "IDX image magic {magic}, expected {IDX_IMAGES_MAGIC}"
        )));
    }
    let n = be_u32(&bytes, 4)? as usize;
    let height = be_u32(&bytes, 8)? as usize;
    let width = be_u32(&bytes, 12)? as usize;
    let expected = 16 + n * height * width;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let images = Matrix::new(n, height * width, data)?;

    let labels = match labels_path {
        Some(path) => {
            let lb = fs::read(path)?;
            let magic = be_u32(&lb, 0)?;
            if magic != IDX_LABELS_MAGIC {
                return Err(Error::Format(format!(
                    "IDX label magic {magic}, expected {IDX_LABELS_MAGIC}"
                )));
            }
            let ln = be_u32(&lb, 4)? as usize;
            if ln != n {
                return Err(Error::Format(format!(
                    "label count {ln} does not match image count {n}"
                )));
            }
            if lb.len() != 8 + ln {
                return Err(Error::Truncated {
                    expected: 8 + ln,
                    actual: lb.len(),
                });
            }
            Some(lb[8..].to_vec())
        }
        None => None,
    };

    let mut set = ImageSet::new_uniform(images, height, width, Aspect::Digit)?;
    set.labels = labels;
    Ok(set)
}

fn quantize(x: f64) -> u8 {
    (x * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Write the images of a set as an IDX file (magic 2051); pixels quantized
/// to bytes by round-half-up.
pub fn save_idx(set: &ImageSet, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + set.len() * set.height * set.width);
    buf.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(set.len() as u32).to_be_bytes());
    buf.extend_from_slice(&(set.height as u32).to_be_bytes());
    buf.extend_from_slice(&(set.width as u32).to_be_bytes());
    buf.extend(set.images.data().iter().map(|&x| quantize(x)));
    fs::write(path, buf)?;
    Ok(())
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Bilinearly upsampled coarse noise grid, one value per pixel in [-amp, amp].
fn smooth_noise(height: usize, width: usize, amp: f64, rng: &mut Rng) -> Vec<f64> {
    const GRID: usize = 5;
    let grid: Vec<f64> = (0..GRID * GRID)
        .map(|_| (rng.uniform() * 2.0 - 1.0) * amp)
        .collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let gy = y as f64 / (height - 1).max(1) as f64 * (GRID - 1) as f64;
            let gx = x as f64 / (width - 1).max(1) as f64 * (GRID - 1) as f64;
            let (y0, x0) = (gy.floor() as usize, gx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(GRID - 1), (x0 + 1).min(GRID - 1));
            let (fy, fx) = (gy - y0 as f64, gx - x0 as f64);
            let top = grid[y0 * GRID + x0] * (1.0 - fx) + grid[y0 * GRID + x1] * fx;
            let bot = grid[y1 * GRID + x0] * (1.0 - fx) + grid[y1 * GRID + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

const NOISE_AMP: f64 = 0.04;

/// Procedural gray-scale faces: bright elliptical head on a dark background
/// with two darker eye blobs and a mouth arc, all jittered per image, plus
/// mild smooth noise. Deterministic per seed.
pub fn synth_faces(n: usize, height: usize, width: usize, seed: u64) -> Result<ImageSet> {
    if n == 0 {
        return Err(Error::Domain("synth_faces needs n >= 1".into()));
    }
    if height < 16 || width < 16 {
        return Err(Error::Domain(format!(
            "face dimensions {height}x{width} below the 16-pixel minimum"
        )));
    }
    let (hf, wf) = (height as f64, width as f64);
    let mut data = Vec::with_capacity(n * height * width);
    for i in 0..n {
        let mut rng = Rng::new(mix_seed(seed, i as u64));
        // mildly jittered geometry under a wide illumination spread, like
        // one subject photographed at many exposures
        let cx = wf * (0.5 + 0.02 * (rng.uniform() * 2.0 - 1.0));
        let cy = hf * (0.5 + 0.02 * (rng.uniform() * 2.0 - 1.0));
        let rx = wf * (0.31 + 0.03 * rng.uniform());
        let ry = hf * (0.39 + 0.03 * rng.uniform());
        let gain = 0.15 + 0.80 * rng.uniform();
        let face_int = gain;
        let eye_dx = rx * (0.42 + 0.06 * rng.uniform());
        let eye_dy = ry * (0.24 + 0.04 * rng.uniform());
        let eye_r = rx * (0.14 + 0.03 * rng.uniform());
        let eye_int = gain * (0.15 + 0.10 * rng.uniform());
        let mouth_dy = ry * (0.44 + 0.06 * rng.uniform());
        let mouth_hw = rx * (0.40 + 0.08 * rng.uniform());
        let mouth_int = gain * (0.20 + 0.10 * rng.uniform());
        let bg = 0.03 + 0.03 * rng.uniform();
        let noise = smooth_noise(height, width, NOISE_AMP, &mut rng);

        for y in 0..height {
            for x in 0..width {
                let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut v = bg;
                // head with a one-pixel soft edge
                let d = (((xf - cx) / rx).powi(2) + ((yf - cy) / ry).powi(2)).sqrt();
                if d < 1.0 {
                    let edge = ((1.0 - d) * rx.min(ry)).min(1.0);
                    v = bg + (face_int - bg) * edge;
                    // eyes
                    for side in [-1.0, 1.0] {
                        let ex = cx + side * eye_dx;
                        let ey = cy - eye_dy;
                        let ed = ((xf - ex).powi(2) + (yf - ey).powi(2)).sqrt();
                        if ed < eye_r {
                            v = eye_int;
                        }
                    }
                    // mouth: shallow downward arc
                    let mx = (xf - cx) / mouth_hw;
                    if mx.abs() < 1.0 {
                        let my = cy + mouth_dy - 1.4 * (1.0 - mx * mx);
                        if (yf - my).abs() < 1.1 {
                            v = mouth_int;
                        }
                    }
                }
                data.push(clamp01(v + noise[y * width + x]));
            }
        }
    }
    ImageSet::new_uniform(Matrix::new(n, height * width, data)?, height, width, Aspect::Face)
}

// Seven-segment endpoints in a unit box: (x0, y0, x1, y1).
const SEGMENTS: [(f64, f64, f64, f64); 7] = [
    (0.2, 0.12, 0.8, 0.12), // A top
    (0.8, 0.12, 0.8, 0.50), // B upper right
    (0.8, 0.50, 0.8, 0.88), // C lower right
    (0.2, 0.88, 0.8, 0.88), // D bottom
    (0.2, 0.50, 0.2, 0.88), // E lower left
    (0.2, 0.12, 0.2, 0.50), // F upper left
    (0.2, 0.50, 0.8, 0.50), // G middle
];

const DIGIT_SEGMENTS: [u8; 10] = [
    0b0111111, // 0: ABCDEF
    0b0000110, // 1: BC
    0b1011011, // 2: ABDEG
    0b1001111, // 3: ABCDG
    0b1100110, // 4: BCFG
    0b1101101, // 5: ACDFG
    0b1111101, // 6: ACDEFG
    0b0000111, // 7: ABC
    0b1111111, // 8
    0b1101111, // 9: ABCDFG
];

fn dist_to_segment(px: f64, py: f64, seg: (f64, f64, f64, f64)) -> f64 {
    let (x0, y0, x1, y1) = seg;
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    };
    let (nx, ny) = (x0 + t * dx, y0 + t * dy);
    ((px - nx).powi(2) + (py - ny).powi(2)).sqrt()
}

/// Procedural bright-stroke digits (seven-segment style glyphs with jittered
/// placement, scale and thickness) on a black background; used in place of
/// MNIST when no IDX files are supplied. Cycles through digits 0-9.
pub fn synth_digits(n: usize, height: usize, width: usize, seed: u64) -> Result<ImageSet> {
    if n == 0 {
        return Err(Error::Domain("synth_digits needs n >= 1".into()));
    }
    if height < 16 || width < 16 {
        return Err(Error::Domain(format!(
            "digit dimensions {height}x{width} below the 16-pixel minimum"
        )));
    }
    let mut data = Vec::with_capacity(n * height * width);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = Rng::new(mix_seed(seed.wrapping_add(0x5EED), i as u64));
        let digit = rng.below(10);
        labels.push(digit as u8);
        let mask = DIGIT_SEGMENTS[digit];
        let box_h = height as f64 * (0.70 + 0.20 * rng.uniform());
        let box_w = box_h * 0.62;
        let oy = rng.uniform() * (height as f64 - box_h);
        let ox = rng.uniform() * (width as f64 - box_w);
        let thickness = box_h * (0.10 + 0.05 * rng.uniform());
        let stroke = 0.90 + 0.10 * rng.uniform();

        for y in 0..height {
            for x in 0..width {
                let ux = (x as f64 + 0.5 - ox) / box_w;
                let uy = (y as f64 + 0.5 - oy) / box_h;
                let mut d = f64::INFINITY;
                for (s, seg) in SEGMENTS.iter().enumerate() {
                    if mask & (1 << s) != 0 {
                        // scale the unit-box distance back to pixels
                        let dd = dist_to_segment(ux, uy, *seg) * box_h;
                        d = d.min(dd);
                    }
                }
                let v = if d < thickness {
                    stroke
                } else if d < thickness + 1.0 {
                    stroke * (thickness + 1.0 - d)
                } else {
                    0.0
                };
                data.push(clamp01(v));
            }
        }
    }
    let mut set = ImageSet::new_uniform(
        Matrix::new(n, height * width, data)?,
        height,
        width,
        Aspect::Digit,
    )?;
    set.labels = Some(labels);
    Ok(set)
}

/// Overlay digits onto faces by per-pixel maximum. Source rows are drawn
/// without replacement; the digit lands at a seeded-random offset fully
/// inside the frame. Pairing to both sources is recorded per mixed row.
pub fn corrupt(faces: &ImageSet, digits: &ImageSet, n: usize, seed: u64) -> Result<ImageSet> {
    if faces.height != digits.height || faces.width != digits.width {
        return Err(Error::Shape {
            op: "corrupt",
            lhs_rows: faces.height,
            lhs_cols: faces.width,
            rhs_rows: digits.height,
            rhs_cols: digits.width,
        });
    }
    if n > faces.len() || n > digits.len() {
        return Err(Error::Domain(format!(
            "cannot draw {n} pairs without replacement from {} faces and {} digits",
            faces.len(),
            digits.len()
        )));
    }
    if n == 0 {
        return Err(Error::Domain("corrupt needs n >= 1".into()));
    }
    let mut rng = Rng::new(seed);
    let mut face_idx: Vec<usize> = (0..faces.len()).collect();
    let mut digit_idx: Vec<usize> = (0..digits.len()).collect();
    rng.shuffle(&mut face_idx);
    rng.shuffle(&mut digit_idx);

    let (h, w) = (faces.height, faces.width);
    let mut data = Vec::with_capacity(n * h * w);
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        let (fi, di) = (face_idx[k], digit_idx[k]);
        pairs.push(PairIndex { face: fi, digit: di });
        let face = faces.images.row_slice(fi);
        let digit = digits.images.row_slice(di);
        let dy = rng.below(h - digits.height + 1);
        let dx = rng.below(w - digits.width + 1);
        let mut img = face.to_vec();
        for y in 0..digits.height {
            for x in 0..digits.width {
                let p = &mut img[(y + dy) * w + (x + dx)];
                *p = p.max(digit[y * digits.width + x]);
            }
        }
        data.extend_from_slice(&img);
    }
    let set = ImageSet {
        images: Matrix::new(n, h * w, data)?,
        height: h,
        width: w,
        aspects: vec![Aspect::Mixed; n],
        pair_index: Some(pairs),
        labels: None,
    };
    set.validate()?;
    Ok(set)
}

/// Write one image row as a binary PGM (P5), maxval 255, round-half-up.
pub fn save_pgm(pixels: &[f64], height: usize, width: usize, path: &Path) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::Format(format!(
            "{} pixels for a {height}x{width} PGM",
            pixels.len()
        )));
    }
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend(pixels.iter().map(|&x| quantize(x)));
    fs::write(path, buf)?;
    Ok(())
}

/// Read a binary PGM back as a 1 x (height*width) matrix in [0,1].
pub fn load_pgm(path: &Path) -> Result<(Matrix, usize, usize)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a P5 PGM".into()));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("PGM header ended early".into()));
        }
        let field = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::Format("non-UTF8 PGM header".into()))?;
        let value: usize = field
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM header field {field:?}")))?;
        fields.push(value);
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval {maxval}, expected 255")));
    }
    pos += 1; // single whitespace after maxval
    let expected = pos + width * height;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[pos..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((Matrix::new(1, width * height, data)?, height, width))
}

/// Tile image rows into a grid with one-pixel white separators and write the
/// result as a single PGM.
pub fn montage(
    rows: &[&[f64]],
    grid_rows: usize,
    grid_cols: usize,
    height: usize,
    width: usize,
    path: &Path,
) -> Result<()> {
    if rows.len() != grid_rows * grid_cols {
        return Err(Error::Format(format!(
            "{} images for a {grid_rows}x{grid_cols} grid",
            rows.len()
        )));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != height * width) {
        return Err(Error::Format(format!(
            "tile with {} pixels in a {height}x{width} montage",
            bad.len()
        )));
    }
    let out_h = grid_rows * height + grid_rows.saturating_sub(1);
    let out_w = grid_cols * width + grid_cols.saturating_sub(1);
    let mut canvas = vec![1.0f64; out_h * out_w];
    for (k, tile) in rows.iter().enumerate() {
        let (gr, gc) = (k / grid_cols, k % grid_cols);
        let oy = gr * (height + 1);
        let ox = gc * (width + 1);
        for y in 0..height {
            let src = &tile[y * width..(y + 1) * width];
            let dst = (oy + y) * out_w + ox;
            canvas[dst..dst + width].copy_from_slice(src);
        }
    }
    save_pgm(&canvas, out_h, out_w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built IDX fixture: 2 images of 28x28.
    fn idx_fixture() -> Vec<u8> {
        let mut bytes = vec![0, 0, 8, 3];
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        for i in 0..2 * 28 * 28 {
            bytes.push((i % 256) as u8);
        }
        bytes
    }

    #[test]
    fn load_idx_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs.idx");
        fs::write(&path, idx_fixture()).unwrap();
        let set = load_idx(&path, None).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!((set.height, set.width), (28, 28));
        assert_eq!(set.uniform_aspect(), Some(Aspect::Digit));
        assert_eq!(set.images.get(0, 0), 0.0);
        assert_eq!(set.images.get(0, 255), 1.0);
    }

    #[test]
    fn load_idx_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs.idx");
        let mut bytes = idx_fixture();
        bytes[3] = 1;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_idx(&path, None), Err(Error::Format(_))));

        let bytes = idx_fixture();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match load_idx(&path, None) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, 16 + 2 * 28 * 28);
                assert_eq!(actual, 16 + 2 * 28 * 28 - 10);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs.idx");
        fs::write(&path, idx_fixture()).unwrap();
        let set = load_idx(&path, None).unwrap();
        let path2 = dir.path().join("copy.idx");
        save_idx(&set, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn load_idx_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("imgs.idx");
        let lpath = dir.path().join("labels.idx");
        fs::write(&ipath, idx_fixture()).unwrap();
        let mut lb = vec![0, 0, 8, 1];
        lb.extend_from_slice(&2u32.to_be_bytes());
        lb.extend_from_slice(&[7, 3]);
        fs::write(&lpath, lb).unwrap();
        let set = load_idx(&ipath, Some(&lpath)).unwrap();
        assert_eq!(set.labels, Some(vec![7, 3]));
    }

    #[test]
    fn synth_faces_deterministic_and_in_range() {
        let a = synth_faces(5, 28, 28, 11).unwrap();
        let b = synth_faces(5, 28, 28, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.images.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(a.uniform_aspect(), Some(Aspect::Face));
        assert!(synth_faces(1, 8, 8, 0).is_err());
    }

    #[test]
    fn synth_faces_are_distinguishable() {
        // mean pairwise MSE between distinct faces must clear 10x the
        // analytic noise floor 2*amp^2/3 of the smooth-noise layer
        let set = synth_faces(100, 28, 28, 13).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                total += set.images.row(i).mean_squared_diff(&set.images.row(j)).unwrap();
                count += 1;
            }
        }
        let mean = total / count as f64;
        let floor = 2.0 * NOISE_AMP * NOISE_AMP / 3.0;
        assert!(mean > 10.0 * floor, "mean pairwise MSE {mean} vs floor {floor}");
    }

    #[test]
    fn synth_digits_deterministic_and_labeled() {
        let a = synth_digits(20, 28, 28, 3).unwrap();
        let b = synth_digits(20, 28, 28, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.images.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        let labels = a.labels.as_ref().unwrap();
        assert_eq!(labels.len(), 20);
        assert!(labels.iter().all(|&l| l < 10));
        // strokes are actually drawn
        let bright = a.images.data().iter().filter(|&&x| x > 0.5).count();
        assert!(bright > 20 * 20, "only {bright} bright pixels");
    }

    #[test]
    fn corrupt_is_max_composition() {
        let faces = synth_faces(6, 28, 28, 1).unwrap();
        let zeros = ImageSet::new_uniform(Matrix::zeros(6, 28 * 28), 28, 28, Aspect::Digit).unwrap();
        let mixed = corrupt(&faces, &zeros, 4, 7).unwrap();
        let pairs = mixed.pair_index.as_ref().unwrap();
        for (k, p) in pairs.iter().enumerate() {
            assert_eq!(mixed.images.row(k), faces.images.row(p.face));
        }

        let digits = synth_digits(6, 28, 28, 2).unwrap();
        let mixed = corrupt(&faces, &digits, 4, 7).unwrap();
        let pairs = mixed.pair_index.as_ref().unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let face = faces.images.row_slice(p.face);
            let row = mixed.images.row_slice(k);
            assert!(row.iter().zip(face).all(|(m, f)| m >= f));
        }
        // without replacement
        let fs: std::collections::HashSet<_> = pairs.iter().map(|p| p.face).collect();
        assert_eq!(fs.len(), 4);
    }

    #[test]
    fn corrupt_rejects_oversized_draws() {
        let faces = synth_faces(3, 28, 28, 1).unwrap();
        let digits = synth_digits(3, 28, 28, 2).unwrap();
        assert!(corrupt(&faces, &digits, 4, 0).is_err());
    }

    #[test]
    fn pgm_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let mut pixels = vec![0.0; 28 * 28];
        pixels[0] = 1.0;
        pixels[1] = 0.5;
        save_pgm(&pixels, 28, 28, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n28 28\n255\n"));
        assert_eq!(bytes.len(), 13 + 784);
        assert_eq!(bytes[13], 255);
        assert_eq!(bytes[14], 128);

        let (m, h, w) = load_pgm(&path).unwrap();
        assert_eq!((h, w), (28, 28));
        assert_eq!(m.get(0, 0), 1.0);
        // byte-quantized values survive a second trip exactly
        save_pgm(m.row_slice(0), h, w, &path).unwrap();
        let (m2, _, _) = load_pgm(&path).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn load_pgm_rejects_malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        fs::write(&path, b"P6\n2 2\n255\n0000").unwrap();
        assert!(matches!(load_pgm(&path), Err(Error::Format(_))));
        fs::write(&path, b"P5\n2 x\n255\n0000").unwrap();
        assert!(matches!(load_pgm(&path), Err(Error::Format(_))));
    }

    #[test]
    fn montage_single_tile_equals_save_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let faces = synth_faces(1, 28, 28, 4).unwrap();
        let row = faces.images.row_slice(0);
        let mpath = dir.path().join("m.pgm");
        let spath = dir.path().join("s.pgm");
        montage(&[row], 1, 1, 28, 28, &mpath).unwrap();
        save_pgm(row, 28, 28, &spath).unwrap();
        assert_eq!(fs::read(&mpath).unwrap(), fs::read(&spath).unwrap());
    }

    #[test]
    fn montage_grid_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let faces = synth_faces(6, 28, 28, 4).unwrap();
        let rows: Vec<&[f64]> = (0..6).map(|i| faces.images.row_slice(i)).collect();
        let path = dir.path().join("grid.pgm");
        montage(&rows, 2, 3, 28, 28, &path).unwrap();
        let (_, h, w) = load_pgm(&path).unwrap();
        assert_eq!((h, w), (57, 86));

        assert!(montage(&rows, 2, 2, 28, 28, &path).is_err());
    }
}
