//! Builders for the cart-wall and elastic-pendulum benchmark systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PwaError, PwaMode, PwaResult, PwaSystem};

/// Parameters of a cart moving between one or two rigid walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartWallParams {
    /// 1: wall on the right only; 2: walls at `±x_wall`.
    pub n_walls: usize,
    pub mass: f64,
    /// Coefficient of restitution applied to the velocity at impact.
    pub restitution: f64,
    pub dt: f64,
    pub x_wall: f64,
    pub x_min: [f64; 2],
    pub x_max: [f64; 2],
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for CartWallParams {
    fn default() -> Self {
        Self {
            n_walls: 1,
            mass: 1.0,
            restitution: 0.9,
            dt: 0.01,
            x_wall: 0.75,
            x_min: [-1.0, -10.0],
            x_max: [1.0, 10.0],
            u_min: -100.0,
            u_max: 100.0,
        }
    }
}

impl CartWallParams {
    /// Two symmetric walls, faster carts and `|u| ≤ 10`.
    pub fn two_walls() -> Self {
        Self {
            n_walls: 2,
            x_min: [-1.0, -20.0],
            x_max: [1.0, 20.0],
            u_min: -10.0,
            u_max: 10.0,
            ..Self::default()
        }
    }
}

fn row(vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, vals.len(), vals)
}

/// Builds the cart-wall system.
///
/// Mode 0 is the free double integrator, mode 1 the impact with the right
/// wall and (with two walls) mode 2 the impact with the left wall at
/// `−x_wall`. Impact is detected on the predicted position `x₁ + Δt·x₂`;
/// at equality the free mode wins the tie.
pub fn build_cart_wall(p: &CartWallParams) -> PwaResult<PwaSystem> {
    if !(p.mass > 0.0) {
        return Err(PwaError::InvalidParameter(format!("mass must be positive, got {}", p.mass)));
    }
    if !(p.dt > 0.0) {
        return Err(PwaError::InvalidParameter(format!("dt must be positive, got {}", p.dt)));
    }
    if !(0.0..=1.0).contains(&p.restitution) {
        return Err(PwaError::InvalidParameter(format!(
            "restitution must lie in [0, 1], got {}",
            p.restitution
        )));
    }
    if !matches!(p.n_walls, 1 | 2) {
        return Err(PwaError::InvalidParameter(format!("n_walls must be 1 or 2, got {}", p.n_walls)));
    }
    if p.n_walls == 2 && !(p.x_wall > 0.0) {
        return Err(PwaError::InvalidParameter("two walls need x_wall > 0".into()));
    }
    let dt = p.dt;
    let free_a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let free_b = DMatrix::from_row_slice(2, 1, &[0.0, dt / p.mass]);
    let wall_a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -p.restitution]);
    let wall_b = DMatrix::zeros(2, 1);
    let predicted = [1.0, dt];
    let neg_predicted = [-1.0, -dt];

    let (free_h, free_k) = if p.n_walls == 1 {
        (row(&predicted), DVector::from_element(1, p.x_wall))
    } else {
        (
            DMatrix::from_row_slice(2, 2, &[1.0, dt, -1.0, -dt]),
            DVector::from_column_slice(&[p.x_wall, p.x_wall]),
        )
    };
    let mut modes = vec![
        PwaMode {
            a: free_a,
            b: free_b,
            c: DVector::zeros(2),
            guard_j: DMatrix::zeros(free_h.nrows(), 1),
            guard_h: free_h,
            guard_k: free_k,
        },
        PwaMode {
            a: wall_a.clone(),
            b: wall_b.clone(),
            c: DVector::zeros(2),
            guard_h: row(&neg_predicted),
            guard_j: DMatrix::zeros(1, 1),
            guard_k: DVector::from_element(1, -p.x_wall),
        },
    ];
    if p.n_walls == 2 {
        modes.push(PwaMode {
            a: wall_a,
            b: wall_b,
            c: DVector::zeros(2),
            guard_h: row(&predicted),
            guard_j: DMatrix::zeros(1, 1),
            guard_k: DVector::from_element(1, -p.x_wall),
        });
    }
    PwaSystem::new(
        modes,
        (DVector::from_column_slice(&p.x_min), DVector::from_column_slice(&p.x_max)),
        (DVector::from_element(1, p.u_min), DVector::from_element(1, p.u_max)),
        dt,
    )
}

/// Physical constants and bounds of the pendulum leaning on an elastic wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    /// Wall stiffness.
    pub stiffness: f64,
    /// Distance from the pivot's vertical to the wall.
    pub wall_distance: f64,
    pub dt: f64,
    pub x_min: [f64; 2],
    pub x_max: [f64; 2],
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 10.0,
            stiffness: 100.0,
            wall_distance: 0.1,
            dt: 0.01,
            x_min: [-0.3, -1.5],
            x_max: [0.3, 1.5],
            u_min: -4.0,
            u_max: 4.0,
        }
    }
}

/// Builds the forward-Euler discretization of the elastic-wall pendulum.
///
/// Mode 0 (angle `x₁ ≤ d/l`) is the free linearized pendulum; mode 1 adds the
/// wall's spring force. Guards only carry the contact condition; the state
/// and input boxes are the system bounds.
pub fn build_elastic_pendulum(p: &PendulumParams) -> PwaResult<PwaSystem> {
    for (name, v) in [("mass", p.mass), ("length", p.length), ("dt", p.dt)] {
        if !(v > 0.0) {
            return Err(PwaError::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if !(p.stiffness >= 0.0) {
        return Err(PwaError::InvalidParameter(format!("stiffness must be non-negative, got {}", p.stiffness)));
    }
    if !(p.wall_distance >= 0.0) {
        return Err(PwaError::InvalidParameter(format!(
            "wall distance must be non-negative, got {}",
            p.wall_distance
        )));
    }
    if !p.gravity.is_finite() {
        return Err(PwaError::InvalidParameter("gravity must be finite".into()));
    }
    let (m, l, g, k, d, dt) = (p.mass, p.length, p.gravity, p.stiffness, p.wall_distance, p.dt);
    let free_cont = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, g / l, 0.0]);
    let wall_cont = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, g / l - k / m, 0.0]);
    let b_cont = DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / (m * l * l)]);
    let c_cont = DVector::from_column_slice(&[0.0, k * d / (m * l)]);
    let eye = DMatrix::<f64>::identity(2, 2);
    let contact = d / l;

    let modes = vec![
        PwaMode {
            a: &eye + &free_cont * dt,
            b: &b_cont * dt,
            c: DVector::zeros(2),
            guard_h: row(&[1.0, 0.0]),
            guard_j: DMatrix::zeros(1, 1),
            guard_k: DVector::from_element(1, contact),
        },
        PwaMode {
            a: &eye + &wall_cont * dt,
            b: &b_cont * dt,
            c: c_cont * dt,
            guard_h: row(&[-1.0, 0.0]),
            guard_j: DMatrix::zeros(1, 1),
            guard_k: DVector::from_element(1, -contact),
        },
    ];
    PwaSystem::new(
        modes,
        (DVector::from_column_slice(&p.x_min), DVector::from_column_slice(&p.x_max)),
        (DVector::from_element(1, p.u_min), DVector::from_element(1, p.u_max)),
        dt,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn cart_mode_counts() {
        let one = build_cart_wall(&CartWallParams::default()).unwrap();
        assert_eq!((one.num_modes(), one.n_x(), one.n_u()), (2, 2, 1));
        let two = build_cart_wall(&CartWallParams::two_walls()).unwrap();
        assert_eq!(two.num_modes(), 3);
    }

    #[test]
    fn zero_restitution_stops_the_cart() {
        let sys = build_cart_wall(&CartWallParams {
            restitution: 0.0,
            ..Default::default()
        })
        .unwrap();
        let (next, mode) = sys.simulate_step(&v(&[0.745, 1.0]), &v(&[0.0])).unwrap();
        assert_eq!(mode, 1);
        assert_eq!(next[1], 0.0);
    }

    #[test]
    fn left_wall_mirrors_right_wall() {
        let sys = build_cart_wall(&CartWallParams::two_walls()).unwrap();
        let (next, mode) = sys.simulate_step(&v(&[-0.745, -1.0]), &v(&[0.0])).unwrap();
        assert_eq!(mode, 2);
        assert!((next[1] - 0.9).abs() < 1e-15);
        assert_eq!(sys.active_mode(&v(&[0.0, 5.0]), &v(&[0.0])).unwrap(), 0);
    }

    #[test]
    fn cart_rejects_bad_parameters() {
        for p in [
            CartWallParams { mass: 0.0, ..Default::default() },
            CartWallParams { dt: -0.01, ..Default::default() },
            CartWallParams { n_walls: 3, ..Default::default() },
        ] {
            assert!(matches!(build_cart_wall(&p), Err(PwaError::InvalidParameter(_))));
        }
    }

    #[test]
    fn pendulum_free_mode_matrix() {
        // I + 0.01·[[0, 1], [10, 0]] with g = 10, l = 1.
        let sys = build_elastic_pendulum(&PendulumParams::default()).unwrap();
        let a = &sys.mode(0).a;
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.01, 0.1, 1.0]);
        assert!((a - expected).amax() < 1e-15);
        assert!((sys.mode(0).b[(1, 0)] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn pendulum_without_stiffness_has_identical_modes() {
        let sys = build_elastic_pendulum(&PendulumParams {
            stiffness: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(sys.mode(0).a, sys.mode(1).a);
        assert_eq!(sys.mode(1).c, DVector::zeros(2));
    }

    #[test]
    fn pendulum_zero_wall_distance_switches_at_zero_angle() {
        let sys = build_elastic_pendulum(&PendulumParams {
            wall_distance: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(sys.mode(0).guard_k[0], 0.0);
        assert_eq!(sys.active_mode(&v(&[0.0, 0.0]), &v(&[0.0])).unwrap(), 0);
        assert_eq!(sys.active_mode(&v(&[1e-6, 0.0]), &v(&[0.0])).unwrap(), 1);
    }

    #[test]
    fn pendulum_rejects_nonpositive_length() {
        let p = PendulumParams { length: 0.0, ..Default::default() };
        assert!(matches!(build_elastic_pendulum(&p), Err(PwaError::InvalidParameter(_))));
    }

    #[test]
    fn guards_cover_the_state_box() {
        let systems = [
            build_cart_wall(&CartWallParams::default()).unwrap(),
            build_cart_wall(&CartWallParams::two_walls()).unwrap(),
            build_elastic_pendulum(&PendulumParams::default()).unwrap(),
        ];
        let u = v(&[0.0]);
        for sys in &systems {
            let (lo, hi) = (sys.x_min(), sys.x_max());
            for i in 0..200 {
                for j in 0..200 {
                    let x = v(&[
                        lo[0] + (hi[0] - lo[0]) * i as f64 / 199.0,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / 199.0,
                    ]);
                    sys.active_mode(&x, &u).unwrap();
                }
            }
        }
    }

    #[test]
    fn wall_steps_reverse_velocity() {
        let sys = build_cart_wall(&CartWallParams::two_walls()).unwrap();
        let u = v(&[3.0]);
        for i in 0..100 {
            for j in 0..100 {
                let x = v(&[-1.0 + 2.0 * i as f64 / 99.0, -20.0 + 40.0 * j as f64 / 99.0]);
                let (next, mode) = sys.simulate_step(&x, &u).unwrap();
                if mode != 0 {
                    assert!(next[1] * x[1] <= 0.0);
                }
            }
        }
    }
}
