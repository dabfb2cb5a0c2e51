//! Q-tensor nematic flow: tensor algebra, the Landau-de Gennes energy,
//! staggered-grid operators, an energy-tracking coupled stepper and
//! long-time equilibrium diagnostics.

pub mod dynamics;
pub mod energy;
pub mod equilibrium;
pub mod grid;
pub mod init;
pub mod par;
pub mod tensor;
