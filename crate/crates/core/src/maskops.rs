// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Mask arithmetic, refinement combination, polygon fill and IoU metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ImageData, NormPoint, RasterMask, ScoreMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("polygon {index} has {vertices} vertices, need at least 3")]
    DegeneratePolygon { index: usize, vertices: usize },
    #[error("polygon vertex ({x}, {y}) lies outside [0,1]^2")]
    VertexOutOfRange { x: f64, y: f64 },
    #[error("cannot aggregate an empty list of mask pairs")]
    EmptyList,
    #[error("alpha {0} must lie in [0,1]")]
    Alpha(f64),
}

fn ensure_same(a: (u32, u32), b: (u32, u32)) -> Result<(), MaskError> {
    if a != b {
        return Err(MaskError::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

fn dims(m: &RasterMask) -> (u32, u32) {
    (m.width(), m.height())
}

/// `bit = value > threshold`, strictly.
pub fn binarize(scores: &ScoreMap, threshold: f64) -> RasterMask {
    let bits = scores
        .values()
        .iter()
        .map(|&v| f64::from(v) > threshold)
        .collect();
    RasterMask::new(scores.width(), scores.height(), bits).expect("score map dimensions are valid")
}

/// Applies a refinement step: `s' = base + pos - neg`, kept where `s' > 0`.
///
/// A pixel in both `pos` and `neg` survives only if it was already in `base`.
pub fn combine(
    base: &RasterMask,
    pos: &RasterMask,
    neg: &RasterMask,
) -> Result<RasterMask, MaskError> {
    ensure_same(dims(base), dims(pos))?;
    ensure_same(dims(base), dims(neg))?;
    let bits = base
        .bits()
        .iter()
        .zip(pos.bits())
        .zip(neg.bits())
        .map(|((&b, &p), &n)| i32::from(b) + i32::from(p) - i32::from(n) > 0)
        .collect();
    Ok(RasterMask::new(base.width(), base.height(), bits).expect("dimensions checked"))
}

/// Fills normalized polygons on a `width x height` grid.
///
/// Each polygon is filled with the even-odd rule, sampling pixel centres;
/// the result is the union over all polygons.
pub fn rasterize_polygons(
    polygons: &[Vec<NormPoint>],
    width: u32,
    height: u32,
) -> Result<RasterMask, MaskError> {
    for (index, poly) in polygons.iter().enumerate() {
        if poly.len() < 3 {
            return Err(MaskError::DegeneratePolygon {
                index,
                vertices: poly.len(),
            });
        }
        if let Some(p) = poly.iter().find(|p| !p.in_unit_square()) {
            return Err(MaskError::VertexOutOfRange { x: p.x, y: p.y });
        }
    }
    let mut mask = RasterMask::empty(width, height);
    let (w, h) = (f64::from(width), f64::from(height));
    let mut crossings: Vec<f64> = Vec::new();
    for poly in polygons {
        let verts: Vec<(f64, f64)> = poly.iter().map(|p| (p.x * w, p.y * h)).collect();
        for row in 0..height {
            let cy = f64::from(row) + 0.5;
            crossings.clear();
            for i in 0..verts.len() {
                let (xa, ya) = verts[i];
                let (xb, yb) = verts[(i + 1) % verts.len()];
                // half-open in y so shared vertices are counted once
                if (ya > cy) != (yb > cy) {
                    crossings.push((xb - xa) * (cy - ya) / (yb - ya) + xa);
                }
            }
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_by(f64::total_cmp);
            for col in 0..width {
                let cx = f64::from(col) + 0.5;
                // inside iff an odd number of crossings lie strictly to the right
                let right = crossings.len() - crossings.partition_point(|&x| x <= cx);
                if right % 2 == 1 {
                    mask.set(col, row, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Intersection and union pixel counts of two masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Overlap {
    pub intersection: u64,
    pub union: u64,
}

impl Overlap {
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

pub fn overlap(a: &RasterMask, b: &RasterMask) -> Result<Overlap, MaskError> {
    ensure_same(dims(a), dims(b))?;
    let (mut intersection, mut union) = (0u64, 0u64);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        intersection += u64::from(x && y);
        union += u64::from(x || y);
    }
    Ok(Overlap {
        intersection,
        union,
    })
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks score 1.0.
pub fn iou(a: &RasterMask, b: &RasterMask) -> Result<f64, MaskError> {
    overlap(a, b).map(|o| o.iou())
}

/// Dataset-level scores: gIoU is the mean per-pair IoU, cIoU is cumulative
/// intersection over cumulative union.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub giou: f64,
    pub ciou: f64,
}

pub fn aggregate(pairs: &[(RasterMask, RasterMask)]) -> Result<Aggregate, MaskError> {
    let overlaps = pairs
        .iter()
        .map(|(pred, gt)| overlap(pred, gt))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_overlaps(&overlaps)
}

/// Same as [`aggregate`] from precomputed counts.
pub fn aggregate_overlaps(overlaps: &[Overlap]) -> Result<Aggregate, MaskError> {
    if overlaps.is_empty() {
        return Err(MaskError::EmptyList);
    }
    let giou = overlaps.iter().map(Overlap::iou).sum::<f64>() / overlaps.len() as f64;
    let total = overlaps.iter().fold(Overlap::default(), |acc, o| Overlap {
        intersection: acc.intersection + o.intersection,
        union: acc.union + o.union,
    });
    Ok(Aggregate {
        giou,
        ciou: total.iou(),
    })
}

/// Alpha-blends `color` over the masked pixels, rounding half up.
pub fn overlay(
    image: &ImageData,
    mask: &RasterMask,
    color: [u8; 3],
    alpha: f64,
) -> Result<ImageData, MaskError> {
    ensure_same((image.width(), image.height()), dims(mask))?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MaskError::Alpha(alpha));
    }
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if !mask.get(x, y) {
                continue;
            }
            let src = image.pixel(x, y);
            let blended = std::array::from_fn(|c| {
                let v = f64::from(src[c]) * (1.0 - alpha) + f64::from(color[c]) * alpha;
                (v + 0.5).floor().clamp(0.0, 255.0) as u8
            });
            out.put_pixel(x, y, blended);
        }
    }
    Ok(out)
}

/// Keeps masked pixels and paints everything else pure white.
pub fn render_masked(image: &ImageData, mask: &RasterMask) -> Result<ImageData, MaskError> {
    ensure_same((image.width(), image.height()), dims(mask))?;
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if !mask.get(x, y) {
                out.put_pixel(x, y, [255, 255, 255]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: u32, h: u32, bits: &[u8]) -> RasterMask {
        RasterMask::new(w, h, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn binarize_is_strict() {
        let s = ScoreMap::new(3, 1, vec![0.4, 0.5, 0.6]).unwrap();
        assert_eq!(binarize(&s, 0.5), mask(3, 1, &[0, 0, 1]));
        assert!(binarize(&ScoreMap::zeros(4, 4), 0.5).is_empty());
        let ones = ScoreMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(binarize(&ones, 0.5), RasterMask::full(2, 2));
    }

    #[test]
    fn combine_examples() {
        let base = mask(4, 1, &[1, 1, 0, 0]);
        let pos = mask(4, 1, &[0, 0, 1, 0]);
        let neg = mask(4, 1, &[0, 1, 0, 0]);
        assert_eq!(
            combine(&base, &pos, &neg).unwrap(),
            mask(4, 1, &[1, 0, 1, 0])
        );
        let zero = RasterMask::empty(4, 1);
        assert_eq!(combine(&base, &zero, &zero).unwrap(), base);
        // 0 + 1 - 1 = 0 is not > 0; 1 + 1 - 1 = 1 is
        let r = combine(
            &mask(2, 1, &[0, 1]),
            &mask(2, 1, &[1, 1]),
            &mask(2, 1, &[1, 1]),
        )
        .unwrap();
        assert_eq!(r, mask(2, 1, &[0, 1]));
        assert!(matches!(
            combine(&base, &RasterMask::empty(2, 2), &zero),
            Err(MaskError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn iou_examples() {
        let a = mask(2, 2, &[1, 1, 0, 0]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &mask(2, 2, &[0, 0, 1, 1])).unwrap(), 0.0);
        // a = {(0,0),(0,1)} in (row, col), b = {(0,0),(1,0)}: I=1, U=3
        let b = mask(2, 2, &[1, 0, 1, 0]);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let e = RasterMask::empty(2, 2);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert_eq!(iou(&e, &a).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        // IoU 1/2 (I=1,U=2) and 1/4 (I=1,U=4), on 4x1 grids
        let pairs = vec![
            (mask(4, 1, &[1, 1, 0, 0]), mask(4, 1, &[1, 0, 0, 0])),
            (mask(4, 1, &[1, 1, 1, 0]), mask(4, 1, &[0, 0, 1, 1])),
        ];
        let agg = aggregate(&pairs).unwrap();
        assert!((agg.giou - 0.375).abs() < 1e-15);
        assert!((agg.ciou - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(aggregate(&[]), Err(MaskError::EmptyList));
        let same = mask(2, 1, &[1, 0]);
        assert_eq!(
            aggregate(&[(same.clone(), same)]).unwrap(),
            Aggregate {
                giou: 1.0,
                ciou: 1.0
            }
        );
    }

    #[test]
    fn rasterize_examples() {
        let square = vec![
            NormPoint::new(0.0, 0.0),
            NormPoint::new(1.0, 0.0),
            NormPoint::new(1.0, 1.0),
            NormPoint::new(0.0, 1.0),
        ];
        assert_eq!(
            rasterize_polygons(&[square], 4, 4).unwrap(),
            RasterMask::full(4, 4)
        );

        // Triangle (0,0),(0.5,0),(0.5,1) on 2x2, i.e. pixel space (0,0),(1,0),(1,2).
        // Centres: (0.5,0.5) is inside (hypotenuse at x=0.25 on that row),
        // (1.5,0.5) and (1.5,1.5) are right of the x=1 edge, (0.5,1.5) is left
        // of the hypotenuse x=0.75. Result: only the top-left pixel.
        let tri = vec![
            NormPoint::new(0.0, 0.0),
            NormPoint::new(0.5, 0.0),
            NormPoint::new(0.5, 1.0),
        ];
        assert_eq!(
            rasterize_polygons(&[tri], 2, 2).unwrap(),
            mask(2, 2, &[1, 0, 0, 0])
        );

        let sq = |x0: f64, y0: f64, x1: f64, y1: f64| {
            vec![
                NormPoint::new(x0, y0),
                NormPoint::new(x1, y0),
                NormPoint::new(x1, y1),
                NormPoint::new(x0, y1),
            ]
        };
        let both =
            rasterize_polygons(&[sq(0.0, 0.0, 0.5, 0.5), sq(0.5, 0.5, 1.0, 1.0)], 4, 4).unwrap();
        let a = rasterize_polygons(&[sq(0.0, 0.0, 0.5, 0.5)], 4, 4).unwrap();
        let b = rasterize_polygons(&[sq(0.5, 0.5, 1.0, 1.0)], 4, 4).unwrap();
        let union = RasterMask::from_fn(4, 4, |x, y| a.get(x, y) || b.get(x, y));
        assert_eq!(both, union);
        assert_eq!(both.count(), 8);

        assert_eq!(
            rasterize_polygons(
                &[vec![NormPoint::new(0.0, 0.0), NormPoint::new(1.0, 1.0)]],
                2,
                2
            ),
            Err(MaskError::DegeneratePolygon {
                index: 0,
                vertices: 2
            })
        );
    }

    #[test]
    fn overlay_examples() {
        let img = ImageData::filled(2, 1, [10, 20, 30], "t").unwrap();
        let full = RasterMask::full(2, 1);
        assert_eq!(overlay(&img, &full, [255, 0, 0], 0.0).unwrap(), img);
        let solid = overlay(&img, &full, [255, 0, 0], 1.0).unwrap();
        assert_eq!(solid.pixel(1, 0), [255, 0, 0]);
        let half = overlay(&img, &mask(2, 1, &[1, 0]), [255, 0, 0], 0.5).unwrap();
        // (10+255)/2 = 132.5 -> 133, (20+0)/2 = 10, (30+0)/2 = 15
        assert_eq!(half.pixel(0, 0), [133, 10, 15]);
        assert_eq!(half.pixel(1, 0), [10, 20, 30]);
    }

    #[test]
    fn render_masked_examples() {
        let img = ImageData::new(2, 2, (0..12).collect(), "t").unwrap();
        assert_eq!(render_masked(&img, &RasterMask::full(2, 2)).unwrap(), img);
        let white = render_masked(&img, &RasterMask::empty(2, 2)).unwrap();
        assert!(white.pixels().iter().all(|&p| p == 255));
        let checker = RasterMask::from_fn(2, 2, |x, y| (x + y) % 2 == 0);
        let out = render_masked(&img, &checker).unwrap();
        let mut expected = Vec::new();
        for i in 0..4usize {
            let keep = (i % 2 + i / 2) % 2 == 0;
            for c in 0..3 {
                expected.push(if keep { (i * 3 + c) as u8 } else { 255 });
            }
        }
        assert_eq!(out.pixels(), expected.as_slice());
        assert!(render_masked(&img, &RasterMask::empty(3, 2)).is_err());
    }

    fn arb_mask_triple() -> impl Strategy<Value = (RasterMask, RasterMask, RasterMask)> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b, c)| {
                    (
                        RasterMask::new(w, h, a).unwrap(),
                        RasterMask::new(w, h, b).unwrap(),
                        RasterMask::new(w, h, c).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn combine_set_identities((m, p, n) in arb_mask_triple()) {
            let empty = RasterMask::empty(m.width(), m.height());
            prop_assert_eq!(combine(&m, &empty, &empty).unwrap(), m.clone());
            prop_assert_eq!(combine(&empty, &p, &empty).unwrap(), p.clone());
            prop_assert_eq!(combine(&m, &empty, &m).unwrap(), empty);
            let out = combine(&m, &p, &n).unwrap();
            for i in 0..out.bits().len() {
                let (b, pb, nb, o) = (m.bits()[i], p.bits()[i], n.bits()[i], out.bits()[i]);
                prop_assert!(!o || b || pb);
                prop_assert!(!(nb && !pb && o));
            }
        }

        #[test]
        fn iou_is_symmetric_and_bounded((a, b, _) in arb_mask_triple()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
            }
            let agg = aggregate(&[(a.clone(), b.clone())]).unwrap();
            prop_assert_eq!(agg.giou, ab);
            prop_assert_eq!(agg.ciou, ab);
        }
    }
}
