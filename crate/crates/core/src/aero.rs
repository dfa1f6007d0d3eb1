//! Unsteady blade-element aerodynamics.
//!
//! The spanwise circulation is a truncated sine series with coefficients
//! `a_n`. Each blade element carries two wake memory states `z1`, `z2` that
//! turn the Duhamel convolution of the two-exponential Wagner response into
//! ODEs. Equating the lifting-line lift coefficient with the Wagner lift
//! coefficient at every collocation station gives a square linear system for
//! the coefficient rates `a_dot`.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::integrate;
use crate::kinematics::{BladeElementState, Coords, Stations};
use crate::model::RobotModel;

/// Two-exponential approximation of the Wagner function,
/// `Phi(t) = 1 - psi1 exp(-eps1 t) - psi2 exp(-eps2 t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WagnerConstants {
    pub psi1: f64,
    pub psi2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Jones' coefficients.
pub const JONES: WagnerConstants = WagnerConstants {
    psi1: 0.165,
    psi2: 0.335,
    eps1: 0.0455,
    eps2: 0.3,
};

impl Default for WagnerConstants {
    fn default() -> Self {
        JONES
    }
}

impl WagnerConstants {
    pub fn phi0(&self) -> f64 {
        1.0 - (self.psi1 + self.psi2)
    }

    /// `t_tilde` is time normalized by half-chord travel.
    pub fn phi(&self, t_tilde: f64) -> Result<f64> {
        if !(t_tilde >= 0.0) {
            return Err(Error::NegativeNormalizedTime(t_tilde));
        }
        Ok(1.0 - (self.psi1 * (-self.eps1 * t_tilde).exp() + self.psi2 * (-self.eps2 * t_tilde).exp()))
    }

    pub fn phi_rate(&self, t_tilde: f64) -> f64 {
        self.psi1 * self.eps1 * (-self.eps1 * t_tilde).exp() + self.psi2 * self.eps2 * (-self.eps2 * t_tilde).exp()
    }
}

/// Wagner function with Jones' coefficients.
pub fn wagner_phi(t_tilde: f64) -> Result<f64> {
    JONES.phi(t_tilde)
}

/// Circulation coefficients and wake memory, one of each per element.
#[derive(Debug, Clone, PartialEq)]
pub struct AeroState {
    pub a: DVector<f64>,
    pub z1: DVector<f64>,
    pub z2: DVector<f64>,
}

impl AeroState {
    pub fn zeros(m: usize) -> Self {
        AeroState {
            a: DVector::zeros(m),
            z1: DVector::zeros(m),
            z2: DVector::zeros(m),
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Memory-state ODE right-hand side:
/// `z_k' = (psi_k eps_k U / b) w - (eps_k U / b) z_k`.
pub fn memory_state_rates(
    wagner: &WagnerConstants,
    z1: &[f64],
    z2: &[f64],
    w: &[f64],
    airspeed: f64,
    half_chord: &[f64],
) -> (DVector<f64>, DVector<f64>) {
    let m = w.len();
    let mut d1 = DVector::zeros(m);
    let mut d2 = DVector::zeros(m);
    for i in 0..m {
        let r1 = wagner.eps1 * airspeed / half_chord[i];
        let r2 = wagner.eps2 * airspeed / half_chord[i];
        d1[i] = r1 * (wagner.psi1 * w[i] - z1[i]);
        d2[i] = r2 * (wagner.psi2 * w[i] - z2[i]);
    }
    (d1, d2)
}

/// Marches the memory states over one step with RK4. `w(t, out)` fills the
/// downwash at time `t` for every element.
#[allow(clippy::too_many_arguments)]
pub fn advance_memory_states(
    wagner: &WagnerConstants,
    z1: &[f64],
    z2: &[f64],
    mut w: impl FnMut(f64, &mut [f64]),
    airspeed: f64,
    half_chord: &[f64],
    t: f64,
    dt: f64,
) -> (DVector<f64>, DVector<f64>) {
    let m = z1.len();
    let mut x = DVector::zeros(2 * m);
    x.rows_mut(0, m).copy_from_slice(z1);
    x.rows_mut(m, m).copy_from_slice(z2);
    let mut buf = vec![0.0; m];
    let next = integrate::rk4_step(
        |tau, x: &DVector<f64>| {
            w(tau, &mut buf);
            let (d1, d2) = memory_state_rates(
                wagner,
                x.rows(0, m).as_slice(),
                x.rows(m, m).as_slice(),
                &buf,
                airspeed,
                half_chord,
            );
            let mut dx = DVector::zeros(2 * m);
            dx.rows_mut(0, m).copy_from(&d1);
            dx.rows_mut(m, m).copy_from(&d2);
            Ok::<_, std::convert::Infallible>(dx)
        },
        t,
        &x,
        dt,
    )
    .unwrap();
    (next.rows(0, m).into_owned(), next.rows(m, m).into_owned())
}

/// Wagner sectional lift, `c_L = (a0 / U) (w Phi(0) + z1 + z2)`.
pub fn sectional_lift(wagner: &WagnerConstants, a0: f64, w: &[f64], z1: &[f64], z2: &[f64], airspeed: f64) -> DVector<f64> {
    let phi0 = wagner.phi0();
    DVector::from_iterator(
        w.len(),
        (0..w.len()).map(|i| a0 / airspeed * (w[i] * phi0 + z1[i] + z2[i])),
    )
}

/// Quasi-steady stand-in for the baseline comparison: `c_L = a0 atan2(v_n, v_e)`.
pub fn quasi_steady_lift(elements: &[BladeElementState], a0: f64) -> DVector<f64> {
    DVector::from_iterator(elements.len(), elements.iter().map(|e| a0 * e.v_n.atan2(e.v_e)))
}

/// Lifting-line discretization: collocation stations and the factored sine
/// matrix `S[i][n] = sin((n + 1) theta_i)`.
#[derive(Debug, Clone)]
pub struct LiftingLine {
    pub stations: Stations,
    pub a0: f64,
    pub c0: f64,
    pub wagner: WagnerConstants,
    half_chord: Vec<f64>,
    sine: DMatrix<f64>,
    sine_inv: DMatrix<f64>,
    /// (n / sin theta_i) sin(n theta_i), the induced-downwash kernel.
    downwash_kernel: DMatrix<f64>,
    condition: f64,
}

/// Largest condition number accepted for the collocation matrix.
const MAX_CONDITION: f64 = 1e12;

impl LiftingLine {
    pub fn new(stations: Stations, a0: f64, c0: f64) -> Result<Self> {
        let m = stations.len();
        let sine = DMatrix::from_fn(m, m, |i, n| ((n + 1) as f64 * stations.theta[i]).sin());
        let downwash_kernel = DMatrix::from_fn(m, m, |i, n| {
            let th = stations.theta[i];
            (n + 1) as f64 * ((n + 1) as f64 * th).sin() / th.sin()
        });
        let sv = sine.clone().singular_values();
        let condition = sv.max() / sv.min();
        if !(condition.is_finite() && condition < MAX_CONDITION) {
            return Err(Error::Collocation { condition });
        }
        let sine_inv = sine
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::Collocation { condition })?;
        let half_chord = stations.chord.iter().map(|c| 0.5 * c).collect();
        Ok(LiftingLine {
            stations,
            a0,
            c0,
            wagner: JONES,
            half_chord,
            sine,
            sine_inv,
            downwash_kernel,
            condition,
        })
    }

    pub fn for_model(model: &RobotModel) -> Result<Self> {
        Self::new(Stations::for_model(model), model.lift_slope_per_rad, model.c0())
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn half_chord(&self) -> &[f64] {
        &self.half_chord
    }

    /// 2-norm condition number of the collocation matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `w_y(theta_i) = -(a0 c0 U / 4 S) sum_n n a_n sin(n theta_i) / sin(theta_i)`
    pub fn induced_downwash(&self, a: &DVector<f64>, airspeed: f64) -> Result<DVector<f64>> {
        if !(airspeed > 0.0) {
            return Err(Error::DegenerateFreestream { airspeed, floor: 0.0 });
        }
        let k = -self.a0 * self.c0 * airspeed / (4.0 * self.stations.span);
        Ok(&self.downwash_kernel * a * k)
    }

    pub fn memory_rates(&self, aero: &AeroState, w: &DVector<f64>, airspeed: f64) -> (DVector<f64>, DVector<f64>) {
        memory_state_rates(
            &self.wagner,
            aero.z1.as_slice(),
            aero.z2.as_slice(),
            w.as_slice(),
            airspeed,
            &self.half_chord,
        )
    }

    pub fn sectional_lift(&self, aero: &AeroState, w: &DVector<f64>, airspeed: f64) -> DVector<f64> {
        sectional_lift(&self.wagner, self.a0, w.as_slice(), aero.z1.as_slice(), aero.z2.as_slice(), airspeed)
    }

    /// Solves, at every station,
    /// `a0 sum_n [(c0 / c_i) a_n + (c0 / U) a_dot_n] sin(n theta_i) = (a0 / U)(w_i Phi(0) + z1_i + z2_i)`
    /// for `a_dot`.
    pub fn solve_fourier_rates(&self, aero: &AeroState, w: &DVector<f64>, airspeed: f64) -> Result<DVector<f64>> {
        if !(airspeed > 0.0) {
            return Err(Error::DegenerateFreestream { airspeed, floor: 0.0 });
        }
        let phi0 = self.wagner.phi0();
        let sa = &self.sine * &aero.a;
        let m = self.len();
        // both sides scaled by U / (a0 c0)
        let rhs = DVector::from_fn(m, |i, _| {
            (w[i] * phi0 + aero.z1[i] + aero.z2[i]) / self.c0 - airspeed / self.stations.chord[i] * sa[i]
        });
        let rates = &self.sine_inv * &rhs;
        let residual = (&self.sine * &rates - &rhs).norm();
        let scale = rhs.norm().max(self.sine.norm() * rates.norm());
        if !residual.is_finite() || residual > 1e-10 * scale {
            return Err(Error::Collocation {
                condition: self.condition,
            });
        }
        Ok(rates)
    }

    /// Relative residual of the collocation equations for given rates, in
    /// lift-coefficient units.
    pub fn collocation_residual(&self, aero: &AeroState, w: &DVector<f64>, airspeed: f64, rates: &DVector<f64>) -> f64 {
        let phi0 = self.wagner.phi0();
        let m = self.len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..m {
            let mut lhs = 0.0;
            for n in 0..m {
                lhs += (self.c0 / self.stations.chord[i] * aero.a[n] + self.c0 / airspeed * rates[n]) * self.sine[(i, n)];
            }
            lhs *= self.a0;
            let rhs = self.a0 / airspeed * (w[i] * phi0 + aero.z1[i] + aero.z2[i]);
            worst = worst.max((lhs - rhs).abs());
            scale = scale.max(rhs.abs()).max(lhs.abs());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Planform area seen by the element quadrature.
    pub fn reference_area(&self) -> f64 {
        self.stations.chord.iter().zip(&self.stations.width).map(|(c, w)| c * w).sum()
    }

    /// Wing lift coefficient from sectional coefficients.
    pub fn total_lift_coefficient(&self, c_l: &DVector<f64>) -> f64 {
        let st = &self.stations;
        let lift: f64 = (0..self.len()).map(|i| c_l[i] * st.chord[i] * st.width[i]).sum();
        lift / self.reference_area()
    }

    /// Wing lift coefficient from the first circulation coefficient,
    /// `C_L = a0 c0 pi S a_1 / (4 A)`.
    pub fn lift_coefficient_from_circulation(&self, a: &DVector<f64>) -> f64 {
        self.a0 * self.c0 * std::f64::consts::PI * self.stations.span * a[0] / (4.0 * self.reference_area())
    }

    /// Time derivative of the aerodynamic state for prescribed normal flow
    /// `v_n` and freestream `U`, with the induced downwash closed through `a`.
    pub fn state_rates(&self, aero: &AeroState, v_n: &DVector<f64>, airspeed: f64) -> Result<AeroRates> {
        let w_y = self.induced_downwash(&aero.a, airspeed)?;
        let w = v_n + &w_y;
        let (z1, z2) = self.memory_rates(aero, &w, airspeed);
        let a = self.solve_fourier_rates(aero, &w, airspeed)?;
        let c_l = self.sectional_lift(aero, &w, airspeed);
        Ok(AeroRates {
            rates: AeroState { a, z1, z2 },
            w,
            w_y,
            c_l,
        })
    }

    /// Integrates the aerodynamic state of a rigid wing held in constant flow.
    pub fn march_fixed_wing(
        &self,
        aero: &AeroState,
        v_n: &DVector<f64>,
        airspeed: f64,
        dt: f64,
        steps: usize,
    ) -> Result<AeroState> {
        let m = self.len();
        let mut x = pack(aero);
        for k in 0..steps {
            x = integrate::rk4_step(
                |_, x: &DVector<f64>| Ok::<_, Error>(pack(&self.state_rates(&unpack(x, m), v_n, airspeed)?.rates)),
                k as f64 * dt,
                &x,
                dt,
            )?;
        }
        Ok(unpack(&x, m))
    }
}

fn pack(s: &AeroState) -> DVector<f64> {
    let m = s.len();
    let mut x = DVector::zeros(3 * m);
    x.rows_mut(0, m).copy_from(&s.a);
    x.rows_mut(m, m).copy_from(&s.z1);
    x.rows_mut(2 * m, m).copy_from(&s.z2);
    x
}

fn unpack(x: &DVector<f64>, m: usize) -> AeroState {
    AeroState {
        a: x.rows(0, m).into_owned(),
        z1: x.rows(m, m).into_owned(),
        z2: x.rows(2 * m, m).into_owned(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeroRates {
    pub rates: AeroState,
    pub w: DVector<f64>,
    pub w_y: DVector<f64>,
    pub c_l: DVector<f64>,
}

/// Per-element aerodynamic result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionalAero {
    /// Total downwash v_n + w_y.
    pub w: f64,
    pub w_y: f64,
    pub c_l: f64,
    /// Inertial force at the quarter chord.
    pub force: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeroForces {
    pub sections: Vec<SectionalAero>,
    /// Generalized aerodynamic force, sum of B_i f_i.
    pub generalized: Coords,
}

/// Sectional force constants that come from the robot description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceConstants {
    pub air_density: f64,
    pub profile_drag_coeff: f64,
}

impl ForceConstants {
    pub fn for_model(model: &RobotModel) -> Self {
        ForceConstants {
            air_density: model.air_density_kgm3,
            profile_drag_coeff: model.profile_drag_coeff,
        }
    }
}

/// Force on one element. Lift `0.5 rho V^2 c dy c_L` acts perpendicular to the
/// in-section relative flow and is tilted back by the induced angle
/// `-w_y / V`; profile drag acts along the flow.
pub fn element_force(e: &BladeElementState, c_l: f64, w_y: f64, k: &ForceConstants) -> Vector3<f64> {
    let v2 = e.v_n * e.v_n + e.v_e * e.v_e;
    if v2 < 1e-24 {
        return Vector3::zeros();
    }
    let v = v2.sqrt();
    let q_area = 0.5 * k.air_density * v2 * e.chord * e.width;
    let flow = (e.normal * e.v_n - e.chord_axis * e.v_e) / v;
    let lift_dir = (e.chord_axis * e.v_n + e.normal * e.v_e) / v;
    let induced = (-w_y / v).atan();
    let lift = q_area * c_l;
    (lift_dir * induced.cos() + flow * induced.sin()) * lift + flow * (q_area * k.profile_drag_coeff)
}

/// Element forces and the generalized aerodynamic force they produce.
pub fn assemble_forces(
    c_l: &DVector<f64>,
    w: &DVector<f64>,
    w_y: &DVector<f64>,
    elements: &[BladeElementState],
    k: &ForceConstants,
) -> AeroForces {
    let mut generalized = Coords::zeros();
    let sections = elements
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let force = element_force(e, c_l[i], w_y[i], k);
            generalized += e.jacobian.transpose() * force;
            SectionalAero {
                w: w[i],
                w_y: w_y[i],
                c_l: c_l[i],
                force,
            }
        })
        .collect();
    AeroForces { sections, generalized }
}
