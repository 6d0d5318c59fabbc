use serde::{Deserialize, Serialize};

/// Flat-road resistance model: aerodynamic drag plus rolling resistance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BikePhysics {
    pub mass_kg: f64,
    pub crr: f64,
    pub cda_m2: f64,
    /// kg/m³
    pub air_density: f64,
    pub g: f64,
}

impl Default for BikePhysics {
    fn default() -> Self {
        Self {
            mass_kg: 85.0,
            crr: 0.005,
            cda_m2: 0.4,
            air_density: 1.225,
            g: 9.81,
        }
    }
}

impl BikePhysics {
    /// Power needed to hold `speed_mps`.
    pub fn power_at(&self, speed_mps: f64) -> f64 {
        0.5 * self.air_density * self.cda_m2 * speed_mps.powi(3) + self.crr * self.mass_kg * self.g * speed_mps
    }

    fn dpower_dv(&self, v: f64) -> f64 {
        1.5 * self.air_density * self.cda_m2 * v * v + self.crr * self.mass_kg * self.g
    }
}

const POWER_TOLERANCE_W: f64 = 1e-3;

/// Speed in m/s at which `power_w` balances resistance.
///
/// The power curve is a strictly increasing cubic through the origin, so the
/// root is unique. Newton from an upper bound converges monotonically
/// (the curve is convex for v ≥ 0).
pub fn power_to_speed(power_w: f64, physics: &BikePhysics) -> f64 {
    if !(power_w > 0.0) {
        return 0.0;
    }
    // Either term alone bounds the speed from above.
    let aero_bound = (2.0 * power_w / (physics.air_density * physics.cda_m2)).cbrt();
    let roll_bound = power_w / (physics.crr * physics.mass_kg * physics.g);
    let mut v = aero_bound.min(roll_bound);
    for _ in 0..100 {
        let err = physics.power_at(v) - power_w;
        if err.abs() < POWER_TOLERANCE_W {
            break;
        }
        v -= err / physics.dpower_dv(v);
    }
    v.max(0.0)
}

/// km/h, the unit shown to riders.
pub fn mps_to_kmh(v: f64) -> f64 {
    v * 3.6
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent bisection on the monotone power curve.
    fn bisect_speed(p: f64, phys: &BikePhysics) -> f64 {
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phys.power_at(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_power_is_standstill() {
        assert_eq!(power_to_speed(0.0, &BikePhysics::default()), 0.0);
        assert_eq!(power_to_speed(-5.0, &BikePhysics::default()), 0.0);
    }

    #[test]
    fn two_hundred_watts_matches_bisection() {
        let phys = BikePhysics::default();
        let v = power_to_speed(200.0, &phys);
        assert!((phys.power_at(v) - 200.0).abs() < 0.01);
        assert!((v - bisect_speed(200.0, &phys)).abs() < 1e-4);
        // sanity: a plausible road speed
        assert!((8.0..12.0).contains(&v), "{v}");
    }

    #[test]
    fn strictly_increasing() {
        let phys = BikePhysics::default();
        let mut prev = 0.0;
        for p in (1..=800).map(|w| w as f64) {
            let v = power_to_speed(p, &phys);
            assert!(v > prev);
            assert!((phys.power_at(v) - p).abs() < 0.01);
            prev = v;
        }
        assert!(power_to_speed(400.0, &phys) > power_to_speed(200.0, &phys));
    }

    #[test]
    fn kmh_conversion() {
        assert!((mps_to_kmh(10.0) - 36.0).abs() < 1e-12);
    }
}
