use serde::{Deserialize, Serialize};

/// Axis-aligned box: top-left corner and size, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn is_valid(&self) -> bool {
        self.w >= 0.0
            && self.h >= 0.0
            && [self.x, self.y, self.w, self.h]
                .iter()
                .all(|v| v.is_finite())
    }

    /// Same center, both sides multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let (cx, cy) = self.center();
        let (w, h) = (self.w * factor, self.h * factor);
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let ih = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        iw.max(0.0) * ih.max(0.0)
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Component-wise mean of `(x, y, w, h)`. `None` for an empty input.
pub fn average_bbox<'a, I>(boxes: I) -> Option<BBox>
where
    I: IntoIterator<Item = &'a BBox>,
{
    let mut acc = [0.0; 4];
    let mut count = 0usize;
    for b in boxes {
        acc[0] += b.x;
        acc[1] += b.y;
        acc[2] += b.w;
        acc[3] += b.h;
        count += 1;
    }
    (count > 0).then(|| {
        let k = count as f64;
        BBox::new(acc[0] / k, acc[1] / k, acc[2] / k, acc[3] / k)
    })
}
