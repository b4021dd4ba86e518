//! Fixtures shared by the kernel benchmarks.

use std::f64::consts::FRAC_PI_2;

use trispin::evolution::TimeDependentHamiltonian;
use trispin::gates::{synchronous_gate, Subspace, SynchronousKind};
use trispin::linalg::ComplexMatrix;
use trispin::scenario::Setup;
use trispin::RotatingFrameModel;

/// X-gate model at `N = 50`, `p = 5`, on the derived operating field.
pub fn x_gate_model() -> RotatingFrameModel {
    Setup::new(50, 5, FRAC_PI_2)
        .cpmg_model(50.0, Default::default())
        .expect("default setup is valid")
}

/// One 27×27 step generator of the X-gate model.
pub fn sector_generator(model: &RotatingFrameModel) -> ComplexMatrix {
    model.step_generator(10.0, 3e-3, 0)
}

pub fn x_target() -> ComplexMatrix {
    synchronous_gate(SynchronousKind::X, Subspace::Yz).rotation_target()
}
