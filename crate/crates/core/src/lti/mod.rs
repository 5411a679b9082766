//! Causal linear time-invariant systems.
//!
//! Two representations are supported: [`TransferMatrix`], a grid of scalar
//! rational filters in the unit delay z⁻¹, and [`StateSpace`]. Both
//! implement [`LtiSystem`], which provides frequency responses on the
//! half-circle grid ω_q = qπ/N, H₂ norms and time-domain simulation.
//!
//! All design-time integrals over frequency use the trapezoidal rule on that
//! grid; since every system here has real coefficients, the integrand is even
//! and [0, π] suffices.

mod grid;
mod rational;
mod state_space;

pub use grid::SpectrumGrid;
pub use rational::{RationalFilter, TransferMatrix, STABILITY_MARGIN};
pub use state_space::{
    discrete_lyapunov, h2_norm_gramian, observability_gramian, realize_state_space, StateSpace,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{trace_re, CMat, RMat};
use crate::stream::EventStream;

/// Default grid size N for design-time frequency integrals.
pub const DEFAULT_GRID_N: usize = 1024;

pub trait LtiSystem {
    fn inputs(&self) -> usize;
    fn outputs(&self) -> usize;
    fn is_stable(&self) -> bool;
    /// Largest pole magnitude (spectral radius for state-space models).
    fn pole_radius(&self) -> f64;
    /// Transfer matrix at z = e^{jω}.
    fn response(&self, omega: f64) -> CMat;
    fn impulse_response(&self, len: usize) -> Vec<RMat>;
    /// H₂ norm along the system's exact route (Gramian for state space,
    /// per-entry energies for transfer matrices).
    fn h2_norm(&self) -> Result<f64>;
    /// ‖G_i‖₂² for every input column i.
    fn column_h2_squared(&self) -> Result<Vec<f64>>;
    /// Zero-initial-state response to a multi-channel input.
    fn simulate(&self, input: &EventStream) -> Result<EventStream>;

    fn ensure_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::UnstableSystem {
                radius: self.pole_radius(),
            })
        }
    }

    /// Samples of the response on ω_q = qπ/N, q = 0..=N.
    fn freq_response(&self, n: usize) -> Result<SpectrumGrid> {
        self.ensure_stable()?;
        if n < 8 {
            return Err(Error::Config(format!("grid size must be at least 8, got {n}")));
        }
        Ok(SpectrumGrid::from_fn(n, self.outputs(), self.inputs(), |w| {
            self.response(w)
        }))
    }
}

/// H₂ norm from the trapezoidal integral of Tr(G*G) on an N-point grid.
pub fn h2_norm_freq(sys: &dyn LtiSystem, n: usize) -> Result<f64> {
    let grid = sys.freq_response(n)?;
    let energy = grid.trapezoid_mean(|g| trace_re(&(g.adjoint() * g)));
    Ok(energy.max(0.0).sqrt())
}

fn check_channels(expected: usize, input: &EventStream) -> Result<()> {
    if input.channel_count() != expected {
        return Err(Error::DimensionMismatch {
            what: "input channels",
            expected,
            found: input.channel_count(),
        });
    }
    Ok(())
}

impl LtiSystem for TransferMatrix {
    fn inputs(&self) -> usize {
        self.cols()
    }

    fn outputs(&self) -> usize {
        self.rows()
    }

    fn is_stable(&self) -> bool {
        self.entries().iter().all(RationalFilter::is_stable)
    }

    fn pole_radius(&self) -> f64 {
        self.max_pole_radius()
    }

    fn response(&self, omega: f64) -> CMat {
        TransferMatrix::response(self, omega)
    }

    fn impulse_response(&self, len: usize) -> Vec<RMat> {
        let per_entry: Vec<Vec<f64>> = self
            .entries()
            .iter()
            .map(|e| e.impulse_response(len))
            .collect();
        (0..len)
            .map(|t| RMat::from_fn(self.rows(), self.cols(), |i, j| per_entry[i * self.cols() + j][t]))
            .collect()
    }

    fn h2_norm(&self) -> Result<f64> {
        self.ensure_stable()?;
        Ok(self.entry_h2_squared()?.iter().sum::<f64>().sqrt())
    }

    fn column_h2_squared(&self) -> Result<Vec<f64>> {
        self.ensure_stable()?;
        TransferMatrix::column_h2_squared(self)
    }

    fn simulate(&self, input: &EventStream) -> Result<EventStream> {
        check_channels(self.cols(), input)?;
        let len = input.len();
        let mut out = vec![vec![0.0; len]; self.rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for j in 0..self.cols() {
                let e = self.get(i, j);
                if e.is_zero() {
                    continue;
                }
                for (acc, v) in row.iter_mut().zip(e.filter(input.channel(j))) {
                    *acc += v;
                }
            }
        }
        Ok(EventStream::from_channels("y", out)?.with_dt_label(input.dt_label.clone()))
    }
}

impl LtiSystem for StateSpace {
    fn inputs(&self) -> usize {
        StateSpace::inputs(self)
    }

    fn outputs(&self) -> usize {
        StateSpace::outputs(self)
    }

    fn is_stable(&self) -> bool {
        StateSpace::is_stable(self)
    }

    fn pole_radius(&self) -> f64 {
        self.spectral_radius()
    }

    fn response(&self, omega: f64) -> CMat {
        StateSpace::response(self, omega)
    }

    fn impulse_response(&self, len: usize) -> Vec<RMat> {
        StateSpace::impulse_response(self, len)
    }

    fn h2_norm(&self) -> Result<f64> {
        h2_norm_gramian(self)
    }

    fn column_h2_squared(&self) -> Result<Vec<f64>> {
        let p0 = observability_gramian(self)?;
        let e = self.b.transpose() * p0 * &self.b + self.d.transpose() * &self.d;
        Ok((0..e.ncols()).map(|i| e[(i, i)].max(0.0)).collect())
    }

    fn simulate(&self, input: &EventStream) -> Result<EventStream> {
        check_channels(StateSpace::inputs(self), input)?;
        let u: Vec<DVector<f64>> = (0..input.len()).map(|t| DVector::from_vec(input.at(t))).collect();
        let y = self.run(&u);
        let channels = (0..StateSpace::outputs(self))
            .map(|i| y.iter().map(|v| v[i]).collect())
            .collect();
        Ok(EventStream::from_channels("y", channels)?.with_dt_label(input.dt_label.clone()))
    }
}

/// Either representation, as read from a filter definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LinearSystem {
    Transfer(TransferMatrix),
    State(StateSpace),
}

impl LinearSystem {
    pub fn to_state_space(&self) -> Result<StateSpace> {
        match self {
            LinearSystem::Transfer(tm) => realize_state_space(tm),
            LinearSystem::State(ss) => Ok(ss.clone()),
        }
    }

    fn inner(&self) -> &dyn LtiSystem {
        match self {
            LinearSystem::Transfer(tm) => tm,
            LinearSystem::State(ss) => ss,
        }
    }
}

impl LtiSystem for LinearSystem {
    fn inputs(&self) -> usize {
        self.inner().inputs()
    }
    fn outputs(&self) -> usize {
        self.inner().outputs()
    }
    fn is_stable(&self) -> bool {
        self.inner().is_stable()
    }
    fn pole_radius(&self) -> f64 {
        self.inner().pole_radius()
    }
    fn response(&self, omega: f64) -> CMat {
        self.inner().response(omega)
    }
    fn impulse_response(&self, len: usize) -> Vec<RMat> {
        self.inner().impulse_response(len)
    }
    fn h2_norm(&self) -> Result<f64> {
        self.inner().h2_norm()
    }
    fn column_h2_squared(&self) -> Result<Vec<f64>> {
        self.inner().column_h2_squared()
    }
    fn simulate(&self, input: &EventStream) -> Result<EventStream> {
        self.inner().simulate(input)
    }
}
