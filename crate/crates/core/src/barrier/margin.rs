use super::{BarrierError, BarrierFn};

/// Margin `h̄_ε` that shrinks `{h ≥ 0}` so that a belief within `ε` of the
/// true state keeps the true state safe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsMargin {
    /// Error radius in state units.
    pub eps: f64,
    /// Supremum of `h` over the `ε`-neighbourhood of its zero set.
    pub bar: f64,
}

impl EpsMargin {
    pub fn zero() -> Self {
        Self { eps: 0.0, bar: 0.0 }
    }

    /// `ĥ = h − h̄_ε`.
    pub fn shifted(&self, value: f64) -> f64 {
        value - self.bar
    }
}

pub fn eps_margin(h: &BarrierFn, eps: f64) -> Result<EpsMargin, BarrierError> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(BarrierError::InvalidRadius(eps));
    }
    Ok(EpsMargin { eps, bar: margin_value(h, eps)? })
}

fn margin_value(h: &BarrierFn, eps: f64) -> Result<f64, BarrierError> {
    Ok(match h {
        BarrierFn::BallAvoid { map, radius, .. } => {
            let e = map.lipschitz() * eps;
            2.0 * radius * e + e * e
        }
        BarrierFn::BallReach { map, radius, .. } => {
            let e = map.lipschitz() * eps;
            if e <= *radius {
                2.0 * radius * e - e * e
            } else {
                radius * radius
            }
        }
        BarrierFn::Halfspace { map, .. } => map.lipschitz() * eps,
        // The covariance is computed, not estimated.
        BarrierFn::Trace { .. } | BarrierFn::Const(_) => 0.0,
        BarrierFn::Custom(c) => match c.lipschitz() {
            Some(l) => l * eps,
            None => return Err(BarrierError::MissingBound(c.name().to_string())),
        },
        BarrierFn::Min(ch) | BarrierFn::Max(ch) => {
            let mut worst: f64 = 0.0;
            for c in ch {
                worst = worst.max(margin_value(c, eps)?);
            }
            worst
        }
    })
}

#[cfg(test)]
mod tests {
    use super::super::PointMap;
    use super::*;

    #[test]
    fn zero_radius_gives_zero_margin() {
        let h = BarrierFn::ball_avoid(PointMap::planar(0, 1), &[0.0, 0.0], 1.0);
        assert_eq!(eps_margin(&h, 0.0).unwrap().bar, 0.0);
    }

    #[test]
    fn closed_forms() {
        let avoid = BarrierFn::ball_avoid(PointMap::planar(0, 1), &[0.0, 0.0], 1.0);
        assert!((eps_margin(&avoid, 0.1).unwrap().bar - 0.21).abs() < 1e-15);
        let half = BarrierFn::halfspace(PointMap::planar(0, 1), &[1.0, 0.0], 0.0);
        assert!((eps_margin(&half, 0.3).unwrap().bar - 0.3).abs() < 1e-15);
        let reach = BarrierFn::ball_reach(PointMap::planar(0, 1), &[0.0, 0.0], 1.0);
        assert!((eps_margin(&reach, 0.1).unwrap().bar - 0.19).abs() < 1e-15);
        assert_eq!(eps_margin(&reach, 3.0).unwrap().bar, 1.0);
        assert_eq!(eps_margin(&BarrierFn::trace_bound(0.9), 0.5).unwrap().bar, 0.0);
    }

    #[test]
    fn look_ahead_scales_radius() {
        let h = BarrierFn::halfspace(PointMap::LookAhead { base: 0, offset: 0.75 }, &[0.0, 1.0], 0.0);
        assert!((eps_margin(&h, 0.4).unwrap().bar - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(eps_margin(&BarrierFn::Const(1.0), -0.1).is_err());
    }
}
