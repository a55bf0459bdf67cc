use serde::{Deserialize, Serialize};

use super::ProximityError;

/// Simple polygon in the workspace-local planar frame (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Geofence {
    polygon: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for Geofence {
    type Error = ProximityError;

    fn try_from(v: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Geofence::new(v)
    }
}

impl From<Geofence> for Vec<(f64, f64)> {
    fn from(g: Geofence) -> Self {
        g.polygon
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    cross(a, b, p) == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

impl Geofence {
    pub fn new(polygon: Vec<(f64, f64)>) -> Result<Self, ProximityError> {
        let n = polygon.len();
        if n < 3 {
            return Err(ProximityError::InvalidGeofence("fewer than 3 vertices"));
        }
        if polygon.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(ProximityError::InvalidGeofence("non-finite vertex"));
        }
        for i in 0..n {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            if a == b {
                return Err(ProximityError::InvalidGeofence("repeated vertex"));
            }
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(a, b, polygon[j], polygon[(j + 1) % n]) {
                    return Err(ProximityError::InvalidGeofence("self-intersecting"));
                }
            }
        }
        let area2: f64 = (0..n).map(|i| cross((0.0, 0.0), polygon[i], polygon[(i + 1) % n])).sum();
        if area2 == 0.0 {
            return Err(ProximityError::InvalidGeofence("zero area"));
        }
        Ok(Geofence { polygon })
    }

    pub fn rectangle(w_m: f64, h_m: f64) -> Result<Self, ProximityError> {
        Geofence::new(vec![(0.0, 0.0), (w_m, 0.0), (w_m, h_m), (0.0, h_m)])
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.polygon
    }

    /// Even-odd ray casting; points on an edge or vertex count as inside.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let n = self.polygon.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            if on_segment(p, a, b) {
                return true;
            }
            if (a.1 > p.1) != (b.1 > p.1) {
                let x_at = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if p.0 < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

pub fn point_in_geofence(point: (f64, f64), fence: &Geofence) -> bool {
    fence.contains(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Geofence {
        Geofence::rectangle(1.0, 1.0).unwrap()
    }

    #[test]
    fn unit_square_membership() {
        let f = unit_square();
        assert!(point_in_geofence((0.5, 0.5), &f));
        assert!(!point_in_geofence((2.0, 2.0), &f));
        assert!(point_in_geofence((1.0, 0.5), &f));
        assert!(point_in_geofence((0.0, 0.0), &f));
        assert!(point_in_geofence((0.3, 1.0), &f));
        assert!(!point_in_geofence((1.0 + 1e-9, 0.5), &f));
    }

    #[test]
    fn invalid_fences() {
        assert!(Geofence::new(vec![(0.0, 0.0), (1.0, 0.0)]).is_err());
        // bow-tie
        assert!(Geofence::new(vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]).is_err());
        // collinear
        assert!(Geofence::new(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).is_err());
        let json = "[[0.0,0.0],[1.0,1.0],[1.0,0.0],[0.0,1.0]]";
        assert!(serde_json::from_str::<Geofence>(json).is_err());
    }

    #[test]
    fn concave_polygon() {
        // U shape: notch between x in (1,2), y > 1
        let f = Geofence::new(vec![(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (2.0, 3.0), (2.0, 1.0), (1.0, 1.0), (1.0, 3.0), (0.0, 3.0)])
            .unwrap();
        assert!(f.contains((0.5, 2.5)));
        assert!(f.contains((2.5, 2.5)));
        assert!(!f.contains((1.5, 2.0)));
        assert!(f.contains((1.5, 0.5)));
    }

    /// Convex, counter-clockwise polygon: inside iff on the left of (or on) every edge.
    fn half_plane_oracle(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
        (0..poly.len()).all(|i| cross(poly[i], poly[(i + 1) % poly.len()], p) >= 0.0)
    }

    #[test]
    fn random_points_vs_convex_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hexagon: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let a = std::f64::consts::TAU * f64::from(i) / 6.0;
                (5.0 + 4.0 * a.cos(), 5.0 + 3.0 * a.sin())
            })
            .collect();
        let f = Geofence::new(hexagon.clone()).unwrap();
        for _ in 0..10_000 {
            let p = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            assert_eq!(f.contains(p), half_plane_oracle(&hexagon, p), "{p:?}");
        }
    }
}
