//! Programmed motion: piecewise constant-acceleration speed profiles and
//! free-form ground-plane paths built from them.

use serde::{Deserialize, Serialize};

/// From `start` onwards the vehicle accelerates at `accel`. A `reset_speed`
/// replaces the speed instantaneously at `start` (used for impacts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start: f64,
    pub accel: f64,
    pub reset_speed: Option<f64>,
}

/// Speed never drops below zero: a braking phase that reaches standstill
/// holds the vehicle at rest until the next phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub initial_speed: f64,
    phases: Vec<Phase>,
    /// Distance and speed at each phase start.
    anchors: Vec<(f64, f64)>,
}

/// Kinematic state along a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub distance: f64,
    pub speed: f64,
    pub accel: f64,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        SpeedProfile::new(speed, Vec::new())
    }

    pub fn new(initial_speed: f64, mut phases: Vec<Phase>) -> Self {
        phases.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut p = SpeedProfile {
            initial_speed,
            phases,
            anchors: Vec::new(),
        };
        let mut anchors = Vec::with_capacity(p.phases.len());
        let (mut t0, mut d, mut v, mut a) = (0.0, 0.0, initial_speed, 0.0);
        for ph in &p.phases {
            let s = advance(d, v, a, ph.start - t0);
            d = s.distance;
            v = ph.reset_speed.unwrap_or(s.speed);
            a = ph.accel;
            t0 = ph.start;
            anchors.push((d, v));
        }
        p.anchors = anchors;
        p
    }

    pub fn then(mut self, start: f64, accel: f64) -> Self {
        self.phases.push(Phase {
            start,
            accel,
            reset_speed: None,
        });
        SpeedProfile::new(self.initial_speed, self.phases)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn sample(&self, t: f64) -> ProfileSample {
        match self.phases.iter().rposition(|p| p.start <= t) {
            None => advance(0.0, self.initial_speed, 0.0, t),
            Some(k) => {
                let (d, v) = self.anchors[k];
                advance(d, v, self.phases[k].accel, t - self.phases[k].start)
            }
        }
    }
}

fn advance(d0: f64, v0: f64, a: f64, dt: f64) -> ProfileSample {
    if a < 0.0 && v0 + a * dt <= 0.0 {
        let stop = -v0 / a;
        let (distance, accel) = if dt >= stop {
            (d0 + v0 * stop + 0.5 * a * stop * stop, 0.0)
        } else {
            (d0 + v0 * dt + 0.5 * a * dt * dt, a)
        };
        let speed = (v0 + a * dt).max(0.0);
        return ProfileSample {
            distance,
            speed,
            accel: if speed == 0.0 { 0.0 } else { accel },
        };
    }
    ProfileSample {
        distance: d0 + v0 * dt + 0.5 * a * dt * dt,
        speed: v0 + a * dt,
        accel: a,
    }
}

/// Heading change of `angle` radians spread evenly over `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub start: f64,
    pub duration: f64,
    pub angle: f64,
}

/// Ground-plane path: a speed profile steered by a list of turns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgrammedPath {
    pub origin: (f64, f64),
    pub initial_heading: f64,
    pub profile: SpeedProfile,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub position: (f64, f64),
    pub heading: f64,
    pub speed: f64,
}

impl ProgrammedPath {
    pub fn straight(origin: (f64, f64), heading: f64, profile: SpeedProfile) -> Self {
        ProgrammedPath {
            origin,
            initial_heading: heading,
            profile,
            turns: Vec::new(),
        }
    }

    pub fn heading_at(&self, t: f64) -> f64 {
        let mut h = self.initial_heading;
        for turn in &self.turns {
            if t >= turn.start + turn.duration {
                h += turn.angle;
            } else if t > turn.start {
                h += turn.angle * (t - turn.start) / turn.duration;
            }
        }
        h
    }

    /// Position by exact integration on straight pieces and Simpson's rule
    /// inside turns.
    pub fn sample(&self, t: f64) -> PathSample {
        let mut breaks: Vec<f64> = self
            .turns
            .iter()
            .flat_map(|tr| [tr.start, tr.start + tr.duration])
            .filter(|&b| b > 0.0 && b < t)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.push(t);

        let (mut x, mut y) = self.origin;
        let mut t0 = 0.0;
        for t1 in breaks {
            if t1 <= t0 {
                continue;
            }
            let mid = 0.5 * (t0 + t1);
            let turning = self
                .turns
                .iter()
                .any(|tr| mid > tr.start && mid < tr.start + tr.duration);
            if turning {
                const N: usize = 64;
                let h = (t1 - t0) / N as f64;
                let (mut sx, mut sy) = (0.0, 0.0);
                for k in 0..=N {
                    let tk = t0 + h * k as f64;
                    let w = if k == 0 || k == N {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let v = self.profile.sample(tk).speed;
                    let hd = self.heading_at(tk);
                    sx += w * v * hd.cos();
                    sy += w * v * hd.sin();
                }
                x += sx * h / 3.0;
                y += sy * h / 3.0;
            } else {
                let ds = self.profile.sample(t1).distance - self.profile.sample(t0).distance;
                let hd = self.heading_at(mid);
                x += ds * hd.cos();
                y += ds * hd.sin();
            }
            t0 = t1;
        }
        PathSample {
            position: (x, y),
            heading: self.heading_at(t),
            speed: self.profile.sample(t).speed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_speed_profile() {
        let p = SpeedProfile::new(
            30.0,
            vec![Phase {
                start: 0.0,
                accel: -2.0,
                reset_speed: None,
            }],
        );
        let s = p.sample(3.0);
        assert_eq!(s.speed, 24.0);
        assert_eq!(s.distance, 81.0);
        assert_eq!(s.accel, -2.0);
    }

    #[test]
    fn braking_holds_at_rest() {
        let p = SpeedProfile::constant(20.0).then(1.0, -5.0);
        let s = p.sample(10.0);
        assert_eq!(s.speed, 0.0);
        assert_eq!(s.accel, 0.0);
        assert!((s.distance - (20.0 + 40.0)).abs() < 1e-12);
    }

    #[test]
    fn reset_speed_applies_at_phase_start() {
        let p = SpeedProfile::new(
            50.0,
            vec![Phase {
                start: 2.0,
                accel: -7.0,
                reset_speed: Some(14.0),
            }],
        );
        assert_eq!(p.sample(1.999).speed, 50.0);
        assert_eq!(p.sample(2.0).speed, 14.0);
        assert!((p.sample(2.0).distance - 100.0).abs() < 1e-12);
        assert_eq!(p.sample(5.0).speed, 0.0);
    }

    #[test]
    fn turn_changes_heading_and_keeps_speed() {
        let path = ProgrammedPath {
            origin: (0.0, 0.0),
            initial_heading: 0.0,
            profile: SpeedProfile::constant(20.0),
            turns: vec![Turn {
                start: 1.0,
                duration: 1.0,
                angle: std::f64::consts::FRAC_PI_2,
            }],
        };
        let s = path.sample(3.0);
        // quarter circle of radius 20/(pi/2) between two 20 m straights
        let r = 20.0 / std::f64::consts::FRAC_PI_2;
        assert!((s.position.0 - (20.0 + r)).abs() < 1e-6, "{s:?}");
        assert!((s.position.1 - (r + 20.0)).abs() < 1e-6, "{s:?}");
        assert!((s.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
