//! Shared fixtures for the kernel benchmarks.

use qmem_core::model::{CircuitParams, DeviceParams};
use qmem_core::overlap::{Geometry, OverlapEvaluator, OverlapTable};

pub fn reference_geometry() -> Geometry {
    Geometry::new(0.5, 0.8, 0.13).unwrap()
}

pub fn reference_device(gamma: f64) -> DeviceParams {
    DeviceParams {
        omega: 7.0,
        gamma,
        alpha: 1.0,
        z_t: 1.0,
        geom: reference_geometry(),
    }
}

pub fn reference_circuit() -> CircuitParams {
    CircuitParams { r_n: 5.0, v_n: 0.5 }
}

pub fn evaluator() -> OverlapEvaluator {
    OverlapEvaluator::new(reference_geometry()).unwrap()
}

pub fn table() -> OverlapTable {
    OverlapTable::covering(evaluator(), -15.0, 15.0).unwrap()
}
