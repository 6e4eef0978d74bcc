//! Tensor calculus on jet-valued chart components.

mod chart;
mod curvature;
mod tensor;

pub use chart::{Axis, Chart};
pub use curvature::{
    covariant_derivative, levi_civita_curvature, trace, ConformalTensors, Curvature, Geometry,
    Schouten,
};
pub use tensor::{multi_indices, MetricJet, Slot, TensorJet};

use crate::error::Result;

pub fn schouten(g: &MetricJet) -> Result<Schouten> {
    let geo = Geometry::new(g)?;
    let s = geo.schouten()?;
    Ok(Schouten {
        p: s.p.clone(),
        j: s.j.clone(),
    })
}

pub fn classical_conformal_tensors(g: &MetricJet) -> Result<ConformalTensors> {
    let geo = Geometry::new(g)?;
    Ok(ConformalTensors {
        b: geo.bach()?.clone(),
        w: geo.weyl()?.clone(),
        c: geo.cotton()?.clone(),
    })
}
