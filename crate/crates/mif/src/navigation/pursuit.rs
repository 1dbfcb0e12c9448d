//! Pure-pursuit path tracking with adaptive lookahead and velocity scaling,
//! plus exact unicycle integration for closed-loop simulation.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::NavError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackingParams {
    /// Base lookahead distance, m.
    pub l0: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Lookahead growth per unit velocity, s.
    pub k_v: f64,
    pub v_max: f64,
    /// Velocity reduction per radian of heading error, 1/rad.
    pub k_theta: f64,
    /// Goal tolerance before stance selection takes over, m.
    pub delta_arrival: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            l0: 0.6,
            l_min: 0.3,
            l_max: 1.2,
            k_v: 0.5,
            v_max: 0.6,
            k_theta: 2.5,
            delta_arrival: 0.3,
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> bool {
        self.l_min > 0.0
            && self.l_min <= self.l0
            && self.l0 <= self.l_max
            && self.v_max > 0.0
            && self.delta_arrival > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PursuitCommand {
    pub v: f64,
    pub omega: f64,
    pub kappa: f64,
    pub delta_theta: f64,
    pub lookahead: f64,
    pub target: Vector2<f64>,
    pub arrived: bool,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Arc-length position of the point on the polyline closest to `p`.
fn closest_arc_length(path: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    let mut best_d2 = f64::INFINITY;
    let mut best_s = 0.0;
    let mut s = 0.0;
    if path.len() == 1 {
        return 0.0;
    }
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        let t = if len > 1e-12 {
            ((p - w[0]).dot(&seg) / (len * len)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = w[0] + t * seg;
        let d2 = (p - q).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best_s = s + t * len;
        }
        s += len;
    }
    best_s
}

/// Point on the polyline at arc length `s` (clamped to the endpoints).
fn point_at_arc_length(path: &[Vector2<f64>], s: f64) -> Vector2<f64> {
    if s <= 0.0 {
        return path[0];
    }
    let mut acc = 0.0;
    for w in path.windows(2) {
        let len = (w[1] - w[0]).norm();
        if acc + len >= s {
            let t = if len > 1e-12 { (s - acc) / len } else { 0.0 };
            return w[0] + t * (w[1] - w[0]);
        }
        acc += len;
    }
    *path.last().unwrap()
}

/// Velocity scaled down linearly with heading error, and the matching
/// velocity-dependent lookahead.
pub fn adaptive_velocity(delta_theta: f64, params: &TrackingParams) -> (f64, f64) {
    let v = params.v_max * (1.0 - params.k_theta * delta_theta.abs()).max(0.0);
    let l = (params.l0 + params.k_v * v).clamp(params.l_min, params.l_max);
    (v, l)
}

fn heading_error(pose: &Pose2, target: &Vector2<f64>) -> f64 {
    let to_target = target - pose.position();
    if to_target.norm() < 1e-12 {
        return 0.0;
    }
    wrap_angle(to_target.y.atan2(to_target.x) - pose.theta)
}

/// One control step: pick the lookahead point, scale velocity by heading
/// error, and steer with curvature 2·sin(Δθ)/L.
pub fn pure_pursuit_step(
    pose: &Pose2,
    path: &[Vector2<f64>],
    params: &TrackingParams,
) -> Result<PursuitCommand, NavError> {
    if path.is_empty() {
        return Err(NavError::EmptyPath);
    }
    let goal = *path.last().unwrap();
    let dist_goal = (goal - pose.position()).norm();
    if dist_goal <= params.delta_arrival {
        return Ok(PursuitCommand {
            v: 0.0,
            omega: 0.0,
            kappa: 0.0,
            delta_theta: 0.0,
            lookahead: params.l0,
            target: goal,
            arrived: true,
        });
    }
    let s0 = closest_arc_length(path, &pose.position());

    // first pass with the base lookahead fixes v, second pass re-aims with
    // the velocity-dependent lookahead
    let coarse_target = point_at_arc_length(path, s0 + params.l0);
    let coarse_dtheta = heading_error(pose, &coarse_target);
    let (v, l) = adaptive_velocity(coarse_dtheta, params);
    let target = point_at_arc_length(path, s0 + l);
    let delta_theta = heading_error(pose, &target);
    let kappa = 2.0 * delta_theta.sin() / l;
    Ok(PursuitCommand {
        v,
        omega: v * kappa,
        kappa,
        delta_theta,
        lookahead: l,
        target,
        arrived: false,
    })
}

/// Exact arc-model integration of unicycle kinematics.
pub fn step_unicycle(pose: &Pose2, v: f64, omega: f64, dt: f64) -> Pose2 {
    assert!(dt > 0.0);
    if omega.abs() < 1e-9 {
        Pose2::new(
            pose.x + v * dt * pose.theta.cos(),
            pose.y + v * dt * pose.theta.sin(),
            pose.theta,
        )
    } else {
        let r = v / omega;
        let theta_new = pose.theta + omega * dt;
        Pose2::new(
            pose.x + r * (theta_new.sin() - pose.theta.sin()),
            pose.y - r * (theta_new.cos() - pose.theta.cos()),
            wrap_angle(theta_new),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    #[test]
    fn straight_tracking_zero_curvature() {
        let path = vec![Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)];
        let pose = Pose2::new(0.0, 0.0, 0.0);
        let cmd = pure_pursuit_step(&pose, &path, &TrackingParams::default()).unwrap();
        assert_relative_eq!(cmd.kappa, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cmd.v, TrackingParams::default().v_max, epsilon = 1e-12);
    }

    #[test]
    fn curvature_matches_formula_on_known_angles() {
        // kappa = 2 sin(pi/6) / 1 = 1, and 2 sin(pi/2) / 0.5 = 4
        assert_relative_eq!(2.0 * FRAC_PI_6.sin() / 1.0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(2.0 * FRAC_PI_2.sin() / 0.5, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn reported_curvature_is_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let params = TrackingParams::default();
        for _ in 0..1000 {
            let path: Vec<Vector2<f64>> = (0..6)
                .map(|_| Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .collect();
            let pose = Pose2::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-PI..PI),
            );
            let cmd = pure_pursuit_step(&pose, &path, &params).unwrap();
            if !cmd.arrived {
                assert_eq!(cmd.kappa, 2.0 * cmd.delta_theta.sin() / cmd.lookahead);
                assert_eq!(cmd.omega, cmd.v * cmd.kappa);
            }
        }
    }

    #[test]
    fn velocity_scaling_law() {
        let params = TrackingParams {
            k_theta: 1.0,
            v_max: 0.6,
            ..TrackingParams::default()
        };
        let (v0, _) = adaptive_velocity(0.0, &params);
        assert_relative_eq!(v0, 0.6, epsilon = 1e-12);
        let (v1, _) = adaptive_velocity(1.0, &params);
        assert_relative_eq!(v1, 0.0, epsilon = 1e-12);
        let (v2, _) = adaptive_velocity(-2.5, &params);
        assert_eq!(v2, 0.0);
        let (_, l) = adaptive_velocity(0.0, &params);
        assert!(l >= params.l_min && l <= params.l_max);
    }

    #[test]
    fn unicycle_straight_and_spin() {
        let p = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), 1.0, 0.0, 1.0);
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        let p = step_unicycle(&Pose2::new(2.0, 3.0, 0.0), 0.0, PI, 1.0);
        assert_relative_eq!(p.x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.theta.abs(), PI, epsilon = 1e-9);
    }

    #[test]
    fn unicycle_exact_arc() {
        // v = omega = 1: unit circle centered at (0, 1); after dt = pi the
        // pose is diametrically opposite
        let p = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), 1.0, 1.0, PI);
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(p.y, 2.0, epsilon = 1e-9);
        assert_relative_eq!(p.theta.abs(), PI, epsilon = 1e-9);
        // quarter arc
        let p = step_unicycle(&Pose2::new(0.0, 0.0, 0.0), 1.0, 1.0, FRAC_PI_2);
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-9);
        assert_relative_eq!(p.y, 1.0, epsilon = 1e-9);
    }

    fn s_curve(n: usize) -> Vec<Vector2<f64>> {
        // two tangent 2 m-radius half arcs forming an S from (0,0) to (0,8)
        let r = 2.0;
        let mut pts = Vec::with_capacity(2 * n + 1);
        // left-turn arc centered at (0, r)
        for i in 0..=n {
            let a = -FRAC_PI_2 + PI * i as f64 / n as f64;
            pts.push(Vector2::new(r * a.cos(), r + r * a.sin()));
        }
        // right-turn arc centered at (0, 3r)
        for i in 1..=n {
            let a = FRAC_PI_2 - PI * i as f64 / n as f64;
            pts.push(Vector2::new(-r * a.cos(), 3.0 * r - r * a.sin()));
        }
        pts
    }

    fn cross_track(path: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for w in path.windows(2) {
            let seg = w[1] - w[0];
            let len2 = seg.norm_squared();
            let t = if len2 > 1e-18 {
                ((p - w[0]).dot(&seg) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            best = best.min((p - (w[0] + t * seg)).norm());
        }
        best
    }

    fn run_closed_loop(adaptive: bool) -> (f64, f64) {
        // returns (max cross-track error, oscillation RMS with amplitude
        // proportional to v * |kappa|)
        let path = s_curve(200);
        let params = TrackingParams::default();
        let mut pose = Pose2::new(path[0].x, path[0].y, 0.0);
        let dt = 0.05;
        let mut max_err: f64 = 0.0;
        let mut osc_sq = 0.0;
        let mut steps = 0usize;
        for _ in 0..4000 {
            let mut cmd = pure_pursuit_step(&pose, &path, &params).unwrap();
            if cmd.arrived {
                break;
            }
            if !adaptive {
                cmd.v = params.v_max;
                cmd.omega = cmd.v * cmd.kappa;
            }
            pose = step_unicycle(&pose, cmd.v, cmd.omega, dt);
            max_err = max_err.max(cross_track(&path, &pose.position()));
            let osc = cmd.v * cmd.kappa.abs();
            osc_sq += osc * osc;
            steps += 1;
        }
        (max_err, (osc_sq / steps.max(1) as f64).sqrt())
    }

    #[test]
    fn s_curve_cross_track_bounded() {
        let (max_err, _) = run_closed_loop(true);
        assert!(max_err < 0.15, "max cross-track error {max_err}");
    }

    #[test]
    fn adaptive_scaling_reduces_oscillation() {
        let (_, rms_adaptive) = run_closed_loop(true);
        let (_, rms_fixed) = run_closed_loop(false);
        assert!(
            rms_adaptive <= 0.7 * rms_fixed,
            "adaptive {rms_adaptive} vs fixed {rms_fixed}"
        );
    }

    #[test]
    fn arrival_stops_the_controller() {
        let path = vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)];
        let pose = Pose2::new(0.9, 0.0, 0.0);
        let cmd = pure_pursuit_step(&pose, &path, &TrackingParams::default()).unwrap();
        assert!(cmd.arrived);
        assert_eq!(cmd.v, 0.0);
    }

    #[test]
    fn empty_path_is_error() {
        let res = pure_pursuit_step(&Pose2::new(0.0, 0.0, 0.0), &[], &TrackingParams::default());
        assert!(matches!(res, Err(NavError::EmptyPath)));
    }
}
