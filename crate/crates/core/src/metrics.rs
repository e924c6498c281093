//! Hypervolume and IGD in a per-instance normalised objective space.
//!
//! Indicators work on minimisation pairs: `(cost, -reliability)`. A
//! [`NormalizationFrame`] built from a reference front maps its ideal point to
//! `(0, 0)` and its nadir to `(1, 1)`; the hypervolume reference point is
//! `(1.1, 1.1)` in that space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flp::ObjectivePoint;

/// Point in minimisation space.
pub type MinPoint = [f64; 2];

pub const HV_REFERENCE: MinPoint = [1.1, 1.1];

/// `(f1, f2) -> (f1, -f2)`.
pub fn to_min_space(p: ObjectivePoint) -> MinPoint {
    [p.f1, -p.f2]
}

pub fn from_min_space(p: MinPoint) -> ObjectivePoint {
    ObjectivePoint::new(p[0], -p[1])
}

/// `a` Pareto-dominates `b` with both coordinates minimised.
pub fn min_dominates(a: &MinPoint, b: &MinPoint) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Exact 2-D hypervolume dominated by `points` and bounded by `reference`.
///
/// Points that do not strictly dominate the reference contribute nothing.
pub fn hypervolume_2d(points: &[MinPoint], reference: MinPoint) -> f64 {
    let mut inside: Vec<MinPoint> = points
        .iter()
        .copied()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    inside.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in inside {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

/// Mean distance from each reference point to its nearest obtained point.
///
/// Infinite when nothing was obtained.
pub fn igd(reference_front: &[MinPoint], obtained: &[MinPoint]) -> Result<f64> {
    if reference_front.is_empty() {
        return Err(Error::Domain("IGD needs a non-empty reference front".into()));
    }
    if obtained.is_empty() {
        return Ok(f64::INFINITY);
    }
    let total: f64 = reference_front
        .iter()
        .map(|r| {
            obtained
                .iter()
                .map(|o| (r[0] - o[0]).hypot(r[1] - o[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / reference_front.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationFrame {
    pub ideal: MinPoint,
    pub nadir: MinPoint,
    pub reference_point: MinPoint,
}

impl NormalizationFrame {
    /// Affine map ideal -> 0, nadir -> 1 per coordinate; zero-range axes map to 0.
    pub fn normalize(&self, p: MinPoint) -> MinPoint {
        let axis = |k: usize| {
            let range = self.nadir[k] - self.ideal[k];
            if range > 0.0 {
                (p[k] - self.ideal[k]) / range
            } else {
                0.0
            }
        };
        [axis(0), axis(1)]
    }

    pub fn normalize_points(&self, points: &[ObjectivePoint]) -> Vec<MinPoint> {
        points.iter().map(|&p| self.normalize(to_min_space(p))).collect()
    }

    /// Hypervolume of `points` after normalisation.
    pub fn hypervolume(&self, points: &[ObjectivePoint]) -> f64 {
        hypervolume_2d(&self.normalize_points(points), self.reference_point)
    }
}

/// Frame spanned by the ideal and nadir points of `reference_front`.
pub fn make_frame(reference_front: &[ObjectivePoint]) -> Result<NormalizationFrame> {
    if reference_front.is_empty() {
        return Err(Error::Domain("cannot build a frame from an empty front".into()));
    }
    let mut ideal = [f64::INFINITY; 2];
    let mut nadir = [f64::NEG_INFINITY; 2];
    for p in reference_front.iter().map(|&p| to_min_space(p)) {
        for k in 0..2 {
            ideal[k] = ideal[k].min(p[k]);
            nadir[k] = nadir[k].max(p[k]);
        }
    }
    Ok(NormalizationFrame {
        ideal,
        nadir,
        reference_point: HV_REFERENCE,
    })
}

/// HV and IGD of an obtained front, both measured in `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicators {
    pub hv: f64,
    pub igd: f64,
}

pub fn indicators(
    frame: &NormalizationFrame,
    reference_front: &[ObjectivePoint],
    obtained: &[ObjectivePoint],
) -> Result<Indicators> {
    let reference = frame.normalize_points(reference_front);
    let got = frame.normalize_points(obtained);
    Ok(Indicators {
        hv: hypervolume_2d(&got, frame.reference_point),
        igd: igd(&reference, &got)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flp::dominates;
    use proptest::prelude::*;

    #[test]
    fn strip_example() {
        let pts = [[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]];
        assert!((hypervolume_2d(&pts, [4.0, 4.0]) - 6.0).abs() < 1e-12);
        assert_eq!(hypervolume_2d(&[], [4.0, 4.0]), 0.0);
        assert_eq!(hypervolume_2d(&[[4.0, 4.0]], [4.0, 4.0]), 0.0);
    }

    #[test]
    fn igd_examples() {
        let front = [[0.0, 0.0], [1.0, 2.0]];
        assert_eq!(igd(&front, &front).unwrap(), 0.0);
        assert_eq!(igd(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap(), 5.0);
        assert_eq!(igd(&[[0.0, 0.0], [2.0, 0.0]], &[[1.0, 0.0]]).unwrap(), 1.0);
        assert_eq!(igd(&front, &[]).unwrap(), f64::INFINITY);
        assert!(matches!(igd(&[], &front), Err(Error::Domain(_))));
    }

    #[test]
    fn orientation_round_trip_and_dominance() {
        let p = ObjectivePoint::new(15.0, 0.6333);
        assert_eq!(to_min_space(p), [15.0, -0.6333]);
        assert_eq!(from_min_space(to_min_space(p)), p);
        let t1 = [
            ObjectivePoint::new(15.0, 1.9 / 3.0),
            ObjectivePoint::new(24.0, 2.2 / 3.0),
            ObjectivePoint::new(33.0, 4.1 / 3.0),
            ObjectivePoint::new(34.0, 1.0),
        ];
        for a in &t1 {
            for b in &t1 {
                assert_eq!(dominates(a, b), min_dominates(&to_min_space(*a), &to_min_space(*b)));
            }
        }
    }

    #[test]
    fn frame_examples() {
        let front = [ObjectivePoint::new(0.0, 1.0), ObjectivePoint::new(10.0, 0.0)];
        let frame = make_frame(&front).unwrap();
        assert_eq!(frame.ideal, [0.0, -1.0]);
        assert_eq!(frame.nadir, [10.0, 0.0]);
        assert_eq!(frame.normalize([5.0, -0.5]), [0.5, 0.5]);
        assert_eq!(frame.reference_point, [1.1, 1.1]);

        let single = make_frame(&[ObjectivePoint::new(3.0, 0.2)]).unwrap();
        assert_eq!(single.normalize([100.0, -7.0]), [0.0, 0.0]);
        assert!(matches!(make_frame(&[]), Err(Error::Domain(_))));
    }

    fn arb_points() -> impl Strategy<Value = Vec<MinPoint>> {
        prop::collection::vec(prop::array::uniform2(0.0f64..1.2), 0..30)
    }

    proptest! {
        #[test]
        fn hv_permutation_and_dominated_invariance(pts in arb_points(), seed in any::<u64>(), extra in prop::array::uniform2(0.0f64..1.0)) {
            let base = hypervolume_2d(&pts, HV_REFERENCE);
            let mut shuffled = pts.clone();
            let len = shuffled.len();
            if len > 1 {
                for k in 0..len {
                    shuffled.swap(k, (seed as usize).wrapping_add(k * 7) % len);
                }
            }
            prop_assert!((hypervolume_2d(&shuffled, HV_REFERENCE) - base).abs() < 1e-12);
            // a point dominated by an existing member leaves HV unchanged
            if let Some(p) = pts.first() {
                let mut more = pts.clone();
                more.push([p[0] + extra[0] * 0.1, p[1] + extra[1] * 0.1]);
                prop_assert!((hypervolume_2d(&more, HV_REFERENCE) - base).abs() < 1e-12);
            }
            // monotone in additions
            let mut grown = pts.clone();
            grown.push(extra);
            prop_assert!(hypervolume_2d(&grown, HV_REFERENCE) >= base - 1e-12);
        }

        #[test]
        fn normalized_reference_front_in_unit_square(raw in prop::collection::vec((0.0f64..100.0, 0.0f64..3.0), 1..20)) {
            let front: Vec<_> = raw.iter().map(|&(a, b)| ObjectivePoint::new(a, b)).collect();
            let frame = make_frame(&front).unwrap();
            for q in frame.normalize_points(&front) {
                prop_assert!((0.0..=1.0).contains(&q[0]) && (0.0..=1.0).contains(&q[1]));
            }
        }

        #[test]
        fn igd_non_negative(a in arb_points(), b in arb_points()) {
            prop_assume!(!a.is_empty() && !b.is_empty());
            prop_assert!(igd(&a, &b).unwrap() >= 0.0);
        }
    }
}
