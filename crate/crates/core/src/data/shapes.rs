//! Rasterized grayscale ellipses and rectangles with known generator
//! parameters, so that "which region of parameter space was excluded" is a
//! measurable property of generated images.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, Generator};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
}

/// A generator parameter a hold-out rule can select on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeParam {
    Rotation,
    Intensity,
    Cx,
    Cy,
    Rx,
    Ry,
}

impl ShapeParam {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "rotation" | "theta" => ShapeParam::Rotation,
            "intensity" => ShapeParam::Intensity,
            "cx" => ShapeParam::Cx,
            "cy" => ShapeParam::Cy,
            "rx" => ShapeParam::Rx,
            "ry" => ShapeParam::Ry,
            other => return Err(Error::Config(format!("unknown shape parameter `{other}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeParam::Rotation => "rotation",
            ShapeParam::Intensity => "intensity",
            ShapeParam::Cx => "cx",
            ShapeParam::Cy => "cy",
            ShapeParam::Rx => "rx",
            ShapeParam::Ry => "ry",
        }
    }
}

/// One shape. Coordinates are in pixels with the origin at the top-left image
/// corner; pixel `(row, col)` is sampled at its center `(col + 0.5, row + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub rotation_deg: f64,
    pub intensity: f64,
}

impl ShapeSpec {
    pub fn param(&self, p: ShapeParam) -> f64 {
        match p {
            ShapeParam::Rotation => self.rotation_deg,
            ShapeParam::Intensity => self.intensity,
            ShapeParam::Cx => self.cx,
            ShapeParam::Cy => self.cy,
            ShapeParam::Rx => self.rx,
            ShapeParam::Ry => self.ry,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let th = self.rotation_deg.to_radians();
        let (s, c) = th.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        match self.kind {
            ShapeKind::Ellipse => (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0,
            ShapeKind::Rectangle => u.abs() <= self.rx && v.abs() <= self.ry,
        }
    }
}

/// Half-extents `(x, y)` of the rotated shape's bounding box.
fn extents(kind: ShapeKind, rx: f64, ry: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    match kind {
        ShapeKind::Ellipse => (
            (rx * rx * c * c + ry * ry * s * s).sqrt(),
            (rx * rx * s * s + ry * ry * c * c).sqrt(),
        ),
        ShapeKind::Rectangle => (rx * c.abs() + ry * s.abs(), rx * s.abs() + ry * c.abs()),
    }
}

/// Uniform prior box over shape parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRanges {
    pub side: usize,
    pub kinds: Vec<ShapeKind>,
    pub cx: (f64, f64),
    pub cy: (f64, f64),
    pub rx: (f64, f64),
    pub ry: (f64, f64),
    pub rotation_deg: (f64, f64),
    pub intensity: (f64, f64),
}

impl ShapeRanges {
    /// Elongated ellipses and rectangles on a 16×16 canvas, rotations in
    /// `[0°, 180°]`.
    pub fn default_for_side(side: usize) -> Self {
        let s = side as f64;
        Self {
            side,
            kinds: vec![ShapeKind::Ellipse, ShapeKind::Rectangle],
            cx: (0.4 * s, 0.6 * s),
            cy: (0.4 * s, 0.6 * s),
            rx: (0.2 * s, 0.3 * s),
            ry: (0.08 * s, 0.14 * s),
            rotation_deg: (0.0, 180.0),
            intensity: (0.6, 1.0),
        }
    }

    pub fn range(&self, p: ShapeParam) -> (f64, f64) {
        match p {
            ShapeParam::Rotation => self.rotation_deg,
            ShapeParam::Intensity => self.intensity,
            ShapeParam::Cx => self.cx,
            ShapeParam::Cy => self.cy,
            ShapeParam::Rx => self.rx,
            ShapeParam::Ry => self.ry,
        }
    }

    /// Copy with one parameter's range replaced.
    pub fn with_range(&self, p: ShapeParam, r: (f64, f64)) -> Self {
        let mut out = self.clone();
        match p {
            ShapeParam::Rotation => out.rotation_deg = r,
            ShapeParam::Intensity => out.intensity = r,
            ShapeParam::Cx => out.cx = r,
            ShapeParam::Cy => out.cy = r,
            ShapeParam::Rx => out.rx = r,
            ShapeParam::Ry => out.ry = r,
        }
        out
    }

    /// Every shape in the box must lie inside the canvas.
    pub fn validate(&self) -> Result<()> {
        if self.side < 8 {
            return Err(Error::InvalidArgument(format!("image side {} < 8", self.side)));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidArgument("no shape kinds selected".into()));
        }
        for p in [
            ShapeParam::Rotation,
            ShapeParam::Intensity,
            ShapeParam::Cx,
            ShapeParam::Cy,
            ShapeParam::Rx,
            ShapeParam::Ry,
        ] {
            let (lo, hi) = self.range(p);
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "range for {} is empty or non-finite: {lo}..{hi}",
                    p.name()
                )));
            }
        }
        if self.intensity.0 < 0.0 || self.intensity.1 > 1.0 {
            return Err(Error::InvalidArgument("intensity must lie in [0, 1]".into()));
        }
        if self.rx.0 <= 0.0 || self.ry.0 <= 0.0 {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }

        let side = self.side as f64;
        let (rx, ry) = (self.rx.1, self.ry.1);
        let (t0, t1) = (self.rotation_deg.0.to_radians(), self.rotation_deg.1.to_radians());
        // Candidate maximizers of the bounding-box extents over the rotation
        // range: its endpoints and the interior critical angles.
        let mut angles = vec![t0, t1];
        let base = [0.0, ry.atan2(rx), rx.atan2(ry), -ry.atan2(rx), -rx.atan2(ry)];
        let k_lo = (t0 / FRAC_PI_2).floor() as i64 - 2;
        let k_hi = (t1 / FRAC_PI_2).ceil() as i64 + 2;
        for k in k_lo..=k_hi {
            for b in base {
                let a = b + k as f64 * FRAC_PI_2;
                if a > t0 && a < t1 {
                    angles.push(a);
                }
            }
        }
        for &kind in &self.kinds {
            let (ex, ey) = angles
                .iter()
                .map(|&a| extents(kind, rx, ry, a))
                .fold((0.0f64, 0.0f64), |(mx, my), (x, y)| (mx.max(x), my.max(y)));
            let eps = 1e-9;
            if self.cx.0 - ex < -eps
                || self.cx.1 + ex > side + eps
                || self.cy.0 - ey < -eps
                || self.cy.1 + ey > side + eps
            {
                return Err(Error::InvalidArgument(format!(
                    "{kind:?} shapes with these ranges can leave the {0}x{0} canvas \
                     (half-extent up to {ex:.3} x {ey:.3})",
                    self.side
                )));
            }
        }
        Ok(())
    }
}

/// Rasterize onto a `side × side` canvas, row-major, values in `[0, 1]`.
pub fn rasterize(spec: &ShapeSpec, side: usize) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            if spec.contains(c as f64 + 0.5, r as f64 + 0.5) {
                img[r * side + c] = spec.intensity;
            }
        }
    }
    img
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draw `n` shape specs uniformly from `ranges`.
pub fn sample_shape_specs(ranges: &ShapeRanges, n: usize, seed: u64) -> Result<Vec<ShapeSpec>> {
    ranges.validate()?;
    let mut rng = seed::stream(seed, "shapes");
    Ok((0..n)
        .map(|_| {
            let kind = ranges.kinds[rng.random_range(0..ranges.kinds.len())];
            ShapeSpec {
                kind,
                cx: draw(&mut rng, ranges.cx),
                cy: draw(&mut rng, ranges.cy),
                rx: draw(&mut rng, ranges.rx),
                ry: draw(&mut rng, ranges.ry),
                rotation_deg: draw(&mut rng, ranges.rotation_deg),
                intensity: draw(&mut rng, ranges.intensity),
            }
        })
        .collect())
}

pub fn gen_shapes_dataset(ranges: &ShapeRanges, n: usize, seed: u64) -> Result<Dataset> {
    let specs = sample_shape_specs(ranges, n, seed)?;
    let side = ranges.side;
    let values: Vec<f64> = specs.iter().flat_map(|s| rasterize(s, side)).collect();
    let labels = specs
        .iter()
        .map(|s| match s.kind {
            ShapeKind::Ellipse => 0,
            ShapeKind::Rectangle => 1,
        })
        .collect();
    let mut d = Dataset::new(
        Tensor::matrix(n, side * side, values)?,
        Some(labels),
        DatasetMeta {
            name: format!("shapes{side}"),
            dim: side * side,
            seed: Some(seed),
            generator: Generator::Shapes(ranges.clone()),
            pixel: true,
            image_dims: Some((side, side)),
        },
    )?;
    d.shape_specs = Some(specs);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::data::{split_holdout, HoldoutRule};

    fn spec(kind: ShapeKind, c: (f64, f64), r: (f64, f64), rot: f64, intensity: f64) -> ShapeSpec {
        ShapeSpec {
            kind,
            cx: c.0,
            cy: c.1,
            rx: r.0,
            ry: r.1,
            rotation_deg: rot,
            intensity,
        }
    }

    #[test]
    fn zero_intensity_is_blank() {
        let img = rasterize(&spec(ShapeKind::Ellipse, (8.0, 8.0), (4.0, 3.0), 30.0, 0.0), 16);
        assert!(img.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_rectangle_is_all_ones() {
        let img = rasterize(&spec(ShapeKind::Rectangle, (8.0, 8.0), (8.0, 8.0), 0.0, 1.0), 16);
        assert!(img.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ellipse_area_matches_pixel_count() {
        let mut rng = seed::rng(5);
        for _ in 0..50 {
            let rx = rng.random_range(3.0..7.0);
            let ry = rng.random_range(3.0..7.0);
            let s = spec(ShapeKind::Ellipse, (16.0, 16.0), (rx, ry), rng.random_range(0.0..180.0), 1.0);
            let count = rasterize(&s, 32).iter().filter(|&&v| v > 0.0).count() as f64;
            let ratio = count / (PI * rx * ry);
            assert!((ratio - 1.0).abs() < 0.15, "rx={rx} ry={ry} ratio={ratio}");
        }
    }

    #[test]
    fn ranges_that_escape_the_canvas_are_rejected() {
        let r = ShapeRanges::default_for_side(16);
        assert!(r.validate().is_ok());
        assert!(r.with_range(ShapeParam::Cx, (2.0, 8.0)).validate().is_err());
        assert!(r.with_range(ShapeParam::Rx, (3.0, 9.0)).validate().is_err());
        let mut small = r.clone();
        small.side = 4;
        assert!(small.validate().is_err());
        // Rotating a 7.5×3 half-size rectangle sweeps its corner past the edge.
        let tight = ShapeRanges {
            side: 16,
            kinds: vec![ShapeKind::Rectangle],
            cx: (8.0, 8.0),
            cy: (8.0, 8.0),
            rx: (7.5, 7.5),
            ry: (3.0, 3.0),
            rotation_deg: (0.0, 0.0),
            intensity: (1.0, 1.0),
        };
        assert!(tight.validate().is_ok());
        assert!(tight.with_range(ShapeParam::Rotation, (0.0, 45.0)).validate().is_err());
    }

    #[test]
    fn generated_shapes_stay_inside_and_in_unit_range() {
        let r = ShapeRanges::default_for_side(16);
        let d = gen_shapes_dataset(&r, 200, 9).unwrap();
        assert_eq!(d.samples.shape(), &[200, 256]);
        assert!(d.samples.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for s in d.shape_specs.as_ref().unwrap() {
            let (ex, ey) = extents(s.kind, s.rx, s.ry, s.rotation_deg.to_radians());
            assert!(s.cx - ex >= -1e-9 && s.cx + ex <= 16.0 + 1e-9);
            assert!(s.cy - ey >= -1e-9 && s.cy + ey <= 16.0 + 1e-9);
        }
    }

    #[test]
    fn rotation_holdout_fraction_matches_prior_measure() {
        let r = ShapeRanges::default_for_side(16);
        let n = 6000;
        let d = gen_shapes_dataset(&r, n, 21).unwrap();
        let d = split_holdout(d, &HoldoutRule::parse("rotation:60..120").unwrap()).unwrap();
        let frac = d.heldout_indices().len() as f64 / n as f64;
        // Counting oracle: prior measure of [60, 120] within [0, 180] is 1/3;
        // binomial sd at n = 6000 is ~0.006.
        let expected = 60.0 / 180.0;
        assert!((frac - expected).abs() < 0.025, "{frac}");
        for i in d.heldout_indices() {
            let th = d.shape_specs.as_ref().unwrap()[i].rotation_deg;
            assert!((60.0..=120.0).contains(&th));
        }
    }
}
