use crate::world::{Position, ServiceConfig};

/// Closed polyline through `points` equally spaced stops on the rectangle
/// inset by `margin`, starting at its lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct RectRoute {
    pub stops: Vec<Position>,
    cumulative: Vec<f64>,
}

impl RectRoute {
    pub fn new(width: f64, height: f64, margin: f64, points: usize) -> Self {
        let (x0, y0) = (margin.min(width / 2.0), margin.min(height / 2.0));
        let (x1, y1) = (width - x0, height - y0);
        let corners = [
            Position::new(x0, y0),
            Position::new(x1, y0),
            Position::new(x1, y1),
            Position::new(x0, y1),
        ];
        let sides: Vec<f64> = (0..4).map(|i| corners[i].distance(&corners[(i + 1) % 4])).collect();
        let perimeter: f64 = sides.iter().sum();
        let points = points.max(1);
        let stops: Vec<Position> = (0..points)
            .map(|i| {
                let mut s = perimeter * i as f64 / points as f64;
                let mut side = 0;
                while side < 3 && s > sides[side] {
                    s -= sides[side];
                    side += 1;
                }
                let t = if sides[side] > 0.0 { s / sides[side] } else { 0.0 };
                corners[side].lerp(&corners[(side + 1) % 4], t)
            })
            .collect();
        let mut cumulative = vec![0.0];
        for i in 0..stops.len() {
            let d = stops[i].distance(&stops[(i + 1) % stops.len()]);
            cumulative.push(cumulative[i] + d);
        }
        Self { stops, cumulative }
    }

    pub fn from_config(cfg: &ServiceConfig) -> Self {
        Self::new(
            cfg.area_width,
            cfg.area_height,
            cfg.baselines.rect_margin,
            cfg.baselines.rect_points,
        )
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Point at arc length `s` (taken modulo the loop length).
    pub fn point_at(&self, s: f64) -> Position {
        let total = self.length();
        if total <= 0.0 {
            return self.stops[0];
        }
        let s = s.rem_euclid(total);
        let i = self.cumulative.partition_point(|&c| c <= s).clamp(1, self.stops.len()) - 1;
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = if seg > 0.0 { (s - self.cumulative[i]) / seg } else { 0.0 };
        self.stops[i].lerp(&self.stops[(i + 1) % self.stops.len()], t)
    }

    /// `n` points equally spaced in arc length over `[from, from + len]`.
    pub fn arc(&self, from: f64, len: f64, n: usize) -> Vec<Position> {
        let n = n.max(1);
        (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                self.point_at(from + len * t)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_stops_are_corners_and_midpoints() {
        let r = RectRoute::new(800.0, 800.0, 100.0, 8);
        assert_eq!(r.stops.len(), 8);
        assert_eq!(r.stops[0], Position::new(100.0, 100.0));
        assert_eq!(r.stops[1], Position::new(400.0, 100.0));
        assert_eq!(r.stops[2], Position::new(700.0, 100.0));
        assert_eq!(r.stops[4], Position::new(700.0, 700.0));
        assert!((r.length() - 2400.0).abs() < 1e-9);
    }

    #[test]
    fn arcs_follow_the_loop() {
        let r = RectRoute::new(800.0, 800.0, 100.0, 8);
        let a = r.arc(2300.0, 800.0, 5);
        assert_eq!(a[0], Position::new(100.0, 200.0));
        assert!(a[1].distance(&Position::new(200.0, 100.0)) < 1e-9);
        assert!(a[4].distance(&Position::new(700.0, 200.0)) < 1e-9);
        for p in &a {
            let on_edge = [p.x - 100.0, 700.0 - p.x, p.y - 100.0, 700.0 - p.y]
                .iter()
                .any(|d| d.abs() < 1e-9);
            assert!(on_edge, "{p}");
        }
    }
}
