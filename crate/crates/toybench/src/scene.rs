//! Synthetic scenes: rendered shapes with exact bounding boxes.
//!
//! Each scene is a single-channel 64x64 image in `[0, 1]` containing one to
//! three shapes (rotated rectangle, rotated ellipse, rotated L) on a black
//! background. Shapes render with 3x3 supersampled coverage, and each object
//! carries the analytic axis-aligned bounding box of its true outline, so
//! labels are exact rather than estimated from pixels.
//!
//! Coordinates are pixel centers: x grows to the right, y grows downward,
//! both in `[0, 63]`. Boxes are `[xmin, ymin, xmax, ymax]` in those
//! continuous coordinates.

use regionlets::net::{Rng, Tensor};
use regionlets::Real;

pub const IMAGE_SIZE: usize = 64;
/// Background plus three shape classes.
pub const NUM_CLASSES: usize = 4;

pub const CLASS_BACKGROUND: usize = 0;
pub const CLASS_RECTANGLE: usize = 1;
pub const CLASS_ELLIPSE: usize = 2;
pub const CLASS_L: usize = 3;

#[derive(Clone, Debug)]
pub struct SceneObject {
    /// 1 = rectangle, 2 = ellipse, 3 = L.
    pub class: usize,
    /// Analytic bounding box, `[xmin, ymin, xmax, ymax]`.
    pub bbox: [f64; 4],
}

#[derive(Clone, Debug)]
pub struct SyntheticScene<T> {
    /// `[1, 64, 64]` image.
    pub image: Tensor<T>,
    pub objects: Vec<SceneObject>,
}

/// Candidate box for the detector, in image coordinates.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// 0 for background, else the matched object's class.
    pub label: usize,
    /// Box regression target `[tx, ty, tw, th]`; zero for background.
    pub target: [f64; 4],
    /// Best overlap against any object.
    pub iou: f64,
    /// Index of the matched object, `usize::MAX` for background.
    pub object: usize,
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    class: usize,
    cx: f64,
    cy: f64,
    /// Half extents along the shape's own axes.
    a: f64,
    b: f64,
    phi: f64,
    intensity: f64,
}

impl Shape {
    /// World point into the shape's local frame.
    fn to_local(self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.phi.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    fn local_to_world(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (self.cx + c * u - s * v, self.cy + s * u + c * v)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.to_local(x, y);
        match self.class {
            CLASS_RECTANGLE => u.abs() <= self.a && v.abs() <= self.b,
            CLASS_ELLIPSE => {
                let nu = u / self.a;
                let nv = v / self.b;
                nu * nu + nv * nv <= 1.0
            }
            CLASS_L => u.abs() <= self.a && v.abs() <= self.b && !(u > 0.0 && v > 0.0),
            _ => false,
        }
    }

    /// Exact axis-aligned bounding box of the outline.
    fn aabb(&self) -> [f64; 4] {
        match self.class {
            CLASS_ELLIPSE => {
                let (s, c) = self.phi.sin_cos();
                let hw = (self.a * self.a * c * c + self.b * self.b * s * s).sqrt();
                let hh = (self.a * self.a * s * s + self.b * self.b * c * c).sqrt();
                [self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh]
            }
            CLASS_RECTANGLE => self.hull_box(&[
                (-self.a, -self.b),
                (self.a, -self.b),
                (self.a, self.b),
                (-self.a, self.b),
            ]),
            CLASS_L => self.hull_box(&[
                (-self.a, -self.b),
                (self.a, -self.b),
                (self.a, 0.0),
                (0.0, 0.0),
                (0.0, self.b),
                (-self.a, self.b),
            ]),
            _ => [self.cx, self.cy, self.cx, self.cy],
        }
    }

    fn hull_box(&self, local: &[(f64, f64)]) -> [f64; 4] {
        let mut out = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &(u, v) in local {
            let (x, y) = self.local_to_world(u, v);
            out[0] = out[0].min(x);
            out[1] = out[1].min(y);
            out[2] = out[2].max(x);
            out[3] = out[3].max(y);
        }
        out
    }
}

/// 3x3 supersampled coverage rendering; overlapping shapes keep the brightest
/// contribution per pixel.
fn render(shapes: &[Shape]) -> Vec<f64> {
    const OFFSETS: [f64; 3] = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    let mut image = vec![0.0f64; IMAGE_SIZE * IMAGE_SIZE];
    for shape in shapes {
        let bb = shape.aabb();
        let x_lo = (bb[0] - 1.0).floor().max(0.0) as usize;
        let x_hi = (bb[2] + 1.0).ceil().min((IMAGE_SIZE - 1) as f64) as usize;
        let y_lo = (bb[1] - 1.0).floor().max(0.0) as usize;
        let y_hi = (bb[3] + 1.0).ceil().min((IMAGE_SIZE - 1) as f64) as usize;
        for iy in y_lo..=y_hi {
            for ix in x_lo..=x_hi {
                let mut hits = 0u32;
                for oy in OFFSETS {
                    for ox in OFFSETS {
                        if shape.contains(ix as f64 + ox, iy as f64 + oy) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let value = shape.intensity * hits as f64 / 9.0;
                    let cell = &mut image[iy * IMAGE_SIZE + ix];
                    if value > *cell {
                        *cell = value;
                    }
                }
            }
        }
    }
    image
}

/// Draws one to three shapes placed fully inside the frame.
pub fn generate_scene<T: Real>(rng: &mut Rng) -> SyntheticScene<T> {
    let count = 1 + rng.below(3);
    let mut shapes = Vec::with_capacity(count);
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let class = 1 + rng.below(3);
        let a = rng.uniform(5.0, 12.0);
        let b = rng.uniform(5.0, 12.0);
        let phi = rng.uniform(0.0, std::f64::consts::PI);
        let intensity = rng.uniform(0.55, 0.95);
        let centered = Shape {
            class,
            cx: 0.0,
            cy: 0.0,
            a,
            b,
            phi,
            intensity,
        };
        let bb = centered.aabb();
        let margin = 1.5;
        let cx = rng.uniform(margin - bb[0], (IMAGE_SIZE - 1) as f64 - margin - bb[2]);
        let cy = rng.uniform(margin - bb[1], (IMAGE_SIZE - 1) as f64 - margin - bb[3]);
        let shape = Shape { cx, cy, ..centered };
        let bbox = shape.aabb();
        shapes.push(shape);
        objects.push(SceneObject { class, bbox });
    }
    let data: Vec<T> = render(&shapes).into_iter().map(T::from_f64).collect();
    let image = Tensor::from_vec(&[1, IMAGE_SIZE, IMAGE_SIZE], data)
        .expect("image buffer matches its dimensions");
    SyntheticScene { image, objects }
}

/// Intersection over union of two boxes.
pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    inter / (area_a + area_b - inter)
}

/// Standard box regression target of `gt` relative to a proposal.
pub fn regression_target(gt: &[f64; 4], cx: f64, cy: f64, w: f64, h: f64) -> [f64; 4] {
    let gcx = 0.5 * (gt[0] + gt[2]);
    let gcy = 0.5 * (gt[1] + gt[3]);
    let gw = gt[2] - gt[0];
    let gh = gt[3] - gt[1];
    [
        (gcx - cx) / w,
        (gcy - cy) / h,
        (gw / w).ln(),
        (gh / h).ln(),
    ]
}

/// Inverse of [`regression_target`]: proposal plus deltas gives a box.
pub fn apply_deltas(cx: f64, cy: f64, w: f64, h: f64, d: &[f64; 4]) -> [f64; 4] {
    let ncx = cx + d[0] * w;
    let ncy = cy + d[1] * h;
    let nw = w * d[2].exp();
    let nh = h * d[3].exp();
    [ncx - nw / 2.0, ncy - nh / 2.0, ncx + nw / 2.0, ncy + nh / 2.0]
}

/// Overlap threshold above which a proposal takes an object's class.
pub const POSITIVE_IOU: f64 = 0.5;

/// Overlap band excluded by the proposal sampler. Boxes whose best IoU
/// falls here are a pixel or two away from flipping their label, so they
/// carry almost no signal; redrawing them (the usual ignore band of anchor
/// samplers) keeps the jitter magnitudes while making labels learnable.
const IGNORE_BAND: (f64, f64) = (0.40, 0.60);

/// Builds candidate boxes for a scene: jittered copies of true objects
/// (scale up to +-30%, shift up to +-20% of the extent) alternating with
/// boxes thrown anywhere, labeled by best overlap. Draws landing in the
/// ignore band around the labeling threshold are retried.
pub fn make_proposals(objects: &[SceneObject], count: usize, rng: &mut Rng) -> Vec<Proposal> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut draw = || -> (f64, f64, f64, f64) {
            if i % 2 == 0 && !objects.is_empty() {
                let o = &objects[rng.below(objects.len())];
                let gw = o.bbox[2] - o.bbox[0];
                let gh = o.bbox[3] - o.bbox[1];
                let gcx = 0.5 * (o.bbox[0] + o.bbox[2]);
                let gcy = 0.5 * (o.bbox[1] + o.bbox[3]);
                (
                    gcx + rng.uniform(-0.2, 0.2) * gw,
                    gcy + rng.uniform(-0.2, 0.2) * gh,
                    gw * rng.uniform(0.7, 1.3),
                    gh * rng.uniform(0.7, 1.3),
                )
            } else {
                (
                    rng.uniform(8.0, 56.0),
                    rng.uniform(8.0, 56.0),
                    rng.uniform(8.0, 30.0),
                    rng.uniform(8.0, 30.0),
                )
            }
        };
        let mut picked = draw();
        for _ in 0..64 {
            let (cx, cy, w, h) = picked;
            let pbox = [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0];
            let best = objects
                .iter()
                .map(|o| iou(&pbox, &o.bbox))
                .fold(0.0, f64::max);
            if !(best > IGNORE_BAND.0 && best < IGNORE_BAND.1) {
                break;
            }
            picked = draw();
        }
        let (cx, cy, w, h) = picked;
        let pbox = [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0];
        let mut best = usize::MAX;
        let mut best_iou = 0.0;
        for (j, o) in objects.iter().enumerate() {
            let v = iou(&pbox, &o.bbox);
            if v > best_iou {
                best_iou = v;
                best = j;
            }
        }
        let positive = best_iou >= POSITIVE_IOU;
        out.push(Proposal {
            cx,
            cy,
            w,
            h,
            label: if positive { objects[best].class } else { 0 },
            target: if positive {
                regression_target(&objects[best].bbox, cx, cy, w, h)
            } else {
                [0.0; 4]
            },
            iou: best_iou,
            object: if positive { best } else { usize::MAX },
        });
    }
    out
}
